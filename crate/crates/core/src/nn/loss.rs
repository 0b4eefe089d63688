/// Squared error restricted to masked entries:
/// `sum_i (pred_i * m_i - target_i * m_i)^2`, with its gradient w.r.t. `pred`.
pub fn masked_mse(pred: &[f64], target: &[f64], mask: &[bool]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "prediction/target length");
    assert_eq!(pred.len(), mask.len(), "prediction/mask length");
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        if mask[i] {
            let diff = pred[i] - target[i];
            loss += diff * diff;
            grad[i] = 2.0 * diff;
        }
    }
    (loss, grad)
}
