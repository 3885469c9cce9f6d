use crate::special::digamma;

const MIN_ALPHA: f64 = 1e-8;
const MAX_INNER_ITERATIONS: usize = 1000;
const TOLERANCE: f64 = 1e-6;

/// Fixed-point re-estimation of an asymmetric Dirichlet prior from
/// document-topic counts (Minka's update for the Dirichlet-multinomial):
///
/// `alpha_k <- alpha_k * sum_d [psi(n_dk + alpha_k) - psi(alpha_k)]
///                     / sum_d [psi(len_d + sum(alpha)) - psi(sum(alpha))]`
///
/// `doc_topic` is D x K row-major. Iterates until every component moves by
/// less than 1e-6 relative, or 1000 rounds; components are floored at 1e-8.
pub fn optimize_alpha(doc_topic: &[u32], doc_lengths: &[u32], alpha: &[f64]) -> Vec<f64> {
    let k = alpha.len();
    assert_eq!(doc_topic.len(), doc_lengths.len() * k, "count table shape");
    let mut alpha: Vec<f64> = alpha.iter().map(|&a| a.max(MIN_ALPHA)).collect();
    if doc_lengths.iter().all(|&l| l == 0) {
        return alpha;
    }
    let mut next = vec![0.0; k];
    for _ in 0..MAX_INNER_ITERATIONS {
        let alpha_sum: f64 = alpha.iter().sum();
        let psi_sum = digamma(alpha_sum);
        let denom: f64 = doc_lengths
            .iter()
            .filter(|&&l| l > 0)
            .map(|&l| digamma(l as f64 + alpha_sum) - psi_sum)
            .sum();
        if !(denom > 0.0) {
            break;
        }
        for (t, out) in next.iter_mut().enumerate() {
            let a = alpha[t];
            let psi_a = digamma(a);
            let num: f64 = doc_topic
                .iter()
                .skip(t)
                .step_by(k)
                .filter(|&&n| n > 0)
                .map(|&n| digamma(n as f64 + a) - psi_a)
                .sum();
            *out = (a * num / denom).max(MIN_ALPHA);
        }
        let converged = alpha
            .iter()
            .zip(&next)
            .all(|(&old, &new)| ((new - old) / old).abs() < TOLERANCE);
        std::mem::swap(&mut alpha, &mut next);
        if converged {
            break;
        }
    }
    alpha
}
