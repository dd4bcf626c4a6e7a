//! CTC loss by the log-space forward–backward algorithm. Label 0 is blank.

use super::{RecogError, Result};
use crate::numkit::Mat;

pub(crate) fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    log_sum_exp2(log_sum_exp2(a, b), c)
}

/// Row-wise log-softmax of a t×|V| logit matrix.
pub fn log_softmax(logits: &Mat) -> Mat {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// Frames needed to emit `target`: one per label plus a blank between repeats.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn validate(logits: &Mat, target: &[usize]) -> Result<()> {
    let (t, v) = logits.shape();
    if t == 0 || v == 0 {
        return Err(RecogError::Argument(format!("logits of shape {t}×{v}")));
    }
    if !logits.is_finite() {
        return Err(RecogError::Domain("non-finite logits".into()));
    }
    if let Some(&bad) = target.iter().find(|&&s| s == 0 || s >= v) {
        return Err(RecogError::Argument(format!(
            "target symbol {bad} outside 1..{v}"
        )));
    }
    let need = min_frames(target);
    if need > t {
        return Err(RecogError::Infeasible {
            needed: need,
            frames: t,
        });
    }
    Ok(())
}

/// `−log p(target | logits)`.
pub fn ctc_loss(logits: &Mat, target: &[usize]) -> Result<f64> {
    Ok(ctc_loss_and_grad(logits, target)?.0)
}

/// CTC loss together with its gradient with respect to the logits (t×|V|).
pub fn ctc_loss_and_grad(logits: &Mat, target: &[usize]) -> Result<(f64, Mat)> {
    validate(logits, target)?;
    let lp = log_softmax(logits);
    let (t, v) = lp.shape();
    let ext: Vec<usize> = std::iter::once(0)
        .chain(target.iter().flat_map(|&s| [s, 0]))
        .collect();
    let s_len = ext.len();
    let skip_ok = |s: usize| s >= 2 && ext[s] != 0 && ext[s] != ext[s - 2];

    let ninf = f64::NEG_INFINITY;
    let mut alpha = vec![ninf; t * s_len];
    alpha[0] = lp[(0, ext[0])];
    if s_len > 1 {
        alpha[1] = lp[(0, ext[1])];
    }
    for tau in 1..t {
        for s in 0..s_len {
            let prev = &alpha[(tau - 1) * s_len..tau * s_len];
            let a = prev[s];
            let b = if s >= 1 { prev[s - 1] } else { ninf };
            let c = if skip_ok(s) { prev[s - 2] } else { ninf };
            let acc = log_sum_exp3(a, b, c);
            alpha[tau * s_len + s] = if acc == ninf {
                ninf
            } else {
                acc + lp[(tau, ext[s])]
            };
        }
    }

    let mut beta = vec![ninf; t * s_len];
    let last = (t - 1) * s_len;
    beta[last + s_len - 1] = lp[(t - 1, ext[s_len - 1])];
    if s_len > 1 {
        beta[last + s_len - 2] = lp[(t - 1, ext[s_len - 2])];
    }
    for tau in (0..t - 1).rev() {
        for s in 0..s_len {
            let next = &beta[(tau + 1) * s_len..(tau + 2) * s_len];
            let a = next[s];
            let b = if s + 1 < s_len { next[s + 1] } else { ninf };
            let c = if s + 2 < s_len && skip_ok(s + 2) {
                next[s + 2]
            } else {
                ninf
            };
            let acc = log_sum_exp3(a, b, c);
            beta[tau * s_len + s] = if acc == ninf {
                ninf
            } else {
                acc + lp[(tau, ext[s])]
            };
        }
    }

    let end = &alpha[last..];
    let log_p = if s_len > 1 {
        log_sum_exp2(end[s_len - 1], end[s_len - 2])
    } else {
        end[0]
    };
    if log_p == ninf {
        return Err(RecogError::Infeasible {
            needed: min_frames(target),
            frames: t,
        });
    }

    // ∂(−log p)/∂u(τ,k) = softmax(τ,k) − Σ_{s: ext[s]=k} exp(α+β−lp−log p)
    let mut grad = Mat::zeros(t, v);
    for tau in 0..t {
        let mut occ = vec![ninf; v];
        for s in 0..s_len {
            let g = alpha[tau * s_len + s] + beta[tau * s_len + s] - lp[(tau, ext[s])];
            occ[ext[s]] = log_sum_exp2(occ[ext[s]], g);
        }
        for k in 0..v {
            grad[(tau, k)] = lp[(tau, k)].exp() - (occ[k] - log_p).exp();
        }
    }
    Ok((-log_p, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collapse(path: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut prev = None;
        for &s in path {
            if Some(s) != prev && s != 0 {
                out.push(s);
            }
            prev = Some(s);
        }
        out
    }

    /// Sum over all |V|^t paths that collapse to `target`.
    fn brute_force(logits: &Mat, target: &[usize]) -> f64 {
        let lp = log_softmax(logits);
        let (t, v) = lp.shape();
        let mut total = 0.0;
        let mut path = vec![0usize; t];
        for code in 0..v.pow(t as u32) {
            let mut c = code;
            for p in path.iter_mut() {
                *p = c % v;
                c /= v;
            }
            if collapse(&path) == target {
                total += path
                    .iter()
                    .enumerate()
                    .map(|(tau, &s)| lp[(tau, s)])
                    .sum::<f64>()
                    .exp();
            }
        }
        -total.ln()
    }

    #[test]
    fn single_frame_uniform() {
        let logits = Mat::zeros(1, 2);
        assert!((ctc_loss(&logits, &[1]).unwrap() - 0.5f64.ln().abs()).abs() < 1e-12);
    }

    #[test]
    fn two_frames_uniform() {
        let logits = Mat::zeros(2, 2);
        let expect = -(3.0f64 * 0.25).ln();
        assert!((ctc_loss(&logits, &[1]).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.287_682_072_451_780_9).abs() < 1e-12);
    }

    #[test]
    fn infeasible_targets() {
        let logits = Mat::zeros(2, 3);
        assert!(matches!(
            ctc_loss(&logits, &[1, 2, 1]),
            Err(RecogError::Infeasible { .. })
        ));
        assert!(matches!(
            ctc_loss(&logits, &[1, 1]),
            Err(RecogError::Infeasible { needed: 3, .. })
        ));
        assert!(matches!(
            ctc_loss(&logits, &[0]),
            Err(RecogError::Argument(_))
        ));
        assert!(matches!(
            ctc_loss(&logits, &[3]),
            Err(RecogError::Argument(_))
        ));
    }

    #[test]
    fn empty_target_is_all_blank() {
        let logits = Mat::from_rows(&[[0.3, -0.2], [1.0, 0.5]]).unwrap();
        let lp = log_softmax(&logits);
        let expect = -(lp[(0, 0)] + lp[(1, 0)]);
        assert!((ctc_loss(&logits, &[]).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn matches_enumeration_on_a_fixed_case() {
        let logits = Mat::from_rows(&[
            [0.1, 1.2, -0.3],
            [0.4, -0.5, 0.9],
            [1.1, 0.2, 0.0],
            [-0.7, 0.3, 0.8],
        ])
        .unwrap();
        for target in [vec![], vec![1], vec![2, 1], vec![1, 1], vec![2, 2]] {
            let got = ctc_loss(&logits, &target).unwrap();
            assert!(
                (got - brute_force(&logits, &target)).abs() < 1e-10,
                "{target:?}"
            );
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = Mat::from_fn(5, 4, |r, c| ((r * 4 + c) as f64 * 0.37).sin());
        let (_, g) = ctc_loss_and_grad(&logits, &[1, 3, 3]).unwrap();
        for r in 0..5 {
            assert!(g.row(r).iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
