//! The ε-regularized flow `∂_tξ = ∂_s(G^ε(∂_sξ)) + ξ`, with `G^ε` the inverse of
//! `F^ε(κ) = εκ + κ/√(ε + |κ|²)`.

const NEWTON_MAX_ITERS: usize = 100;

/// Radial profile `f(r) = εr + r/√(ε + r²)` of `F^ε`.
pub fn f_radial(r: f64, eps: f64) -> f64 {
    eps * r + r / (eps + r * r).sqrt()
}

fn f_radial_prime(r: f64, eps: f64) -> f64 {
    let q = eps + r * r;
    eps + eps / (q * q.sqrt())
}

/// `F^ε(κ)`.
pub fn f_eps(kappa: &[f64], eps: f64) -> Vec<f64> {
    let r = norm(kappa);
    let scale = eps + 1.0 / (eps + r * r).sqrt();
    kappa.iter().map(|k| k * scale).collect()
}

/// Solve `f(r) = t` for `r ≥ 0`.
///
/// `f` is increasing and concave on `[0, ∞)`, so Newton's method started below the
/// root increases monotonically to it. The start is the largest of three lower bounds:
/// `t / f'(0)` (concavity), `(t − 1)/ε` (since `f(r) < εr + 1`), and one Newton step
/// taken from the upper bound `t√ε/√(1 − t²)` (the root without the `εr` term), or
/// `t/ε` when `t ≥ 1`.
pub fn g_radial(t: f64, eps: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let upper = t / eps;
    let hi = if t < 1.0 { (t * eps.sqrt() / (1.0 - t * t).sqrt()).min(upper) } else { upper };
    let from_hi = hi - (f_radial(hi, eps) - t) / f_radial_prime(hi, eps);
    let mut r = (t / f_radial_prime(0.0, eps)).max((t - 1.0) / eps).max(from_hi).clamp(0.0, upper);
    for _ in 0..NEWTON_MAX_ITERS {
        let g = f_radial(r, eps) - t;
        if g.abs() <= 1e-14 * (1.0 + t) {
            break;
        }
        let next = (r - g / f_radial_prime(r, eps)).clamp(0.0, upper);
        if next == r {
            break;
        }
        r = next;
    }
    r
}

/// `G^ε(τ) = (F^ε)⁻¹(τ)`: same direction as `τ`, radius from [`g_radial`].
pub fn g_eps(tau: &[f64], eps: f64) -> Vec<f64> {
    let t = norm(tau);
    if t == 0.0 {
        return vec![0.0; tau.len()];
    }
    let r = g_radial(t, eps);
    tau.iter().map(|v| v * (r / t)).collect()
}

/// Discrete energy `h Σ ε(|κ_{i+½}|²/2 − 1/√(ε + |κ_{i+½}|²)) − ½ h Σ |ξ_i|²` with
/// `κ_{i+½} = G^ε(n e_i)`. The regularized stepper is the explicit Euler step of its
/// negative gradient flow in the `h`-weighted inner product.
pub fn energy(curve: &crate::grid_curve::GridCurve, eps: f64) -> f64 {
    let n = curve.n() as f64;
    let h = curve.h();
    let potential: f64 = curve
        .edge_lengths()
        .iter()
        .map(|l| {
            let k = g_radial(l * n, eps);
            eps * (0.5 * k * k - 1.0 / (eps + k * k).sqrt())
        })
        .sum();
    h * potential - 0.5 * h * curve.points().iter().map(|v| v * v).sum::<f64>()
}

/// Largest stable explicit step `h² ε / 4`.
pub fn stability_bound(n: usize, eps: f64) -> f64 {
    eps / (4.0 * (n * n) as f64)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(g_eps(&[0.0, 0.0], 0.1), vec![0.0, 0.0]);
        let k = g_eps(&[1.0 + 1.0 / 2f64.sqrt(), 0.0], 1.0);
        assert!((k[0] - 1.0).abs() < 1e-10 && k[1] == 0.0);
    }

    #[test]
    fn step_descends_the_energy() {
        use crate::flow::{step_regularized, FlowKind, FlowState};
        use crate::grid_curve::{make_curve, InitDescriptor};
        let c = make_curve(&"perturbed:0.2,3@0.8".parse::<InitDescriptor>().unwrap(), 32, 2).unwrap();
        for eps in [1e-1, 1e-2] {
            let s0 = FlowState::new(c.clone(), FlowKind::Regularized { epsilon: eps });
            let e0 = energy(&s0.curve, eps);
            // dE/dt = −h Σ |v|², first order in dt
            let mut errs = Vec::new();
            for dt in [stability_bound(32, eps) / 8.0, stability_bound(32, eps) / 16.0] {
                let (s1, rep) = step_regularized(&s0, dt, eps).unwrap();
                let rate = (energy(&s1.curve, eps) - e0) / dt;
                errs.push((rate + rep.dissipation_lhs).abs() / rep.dissipation_lhs);
            }
            assert!(errs[0] < 1e-2 && errs[1] < 0.6 * errs[0], "{errs:?}");
        }
    }

    proptest! {
        #[test]
        fn inverse_identity(x in -50.0f64..50.0, y in -50.0f64..50.0, z in -1.0f64..1.0, e in 0usize..3) {
            let eps = [1e-1, 1e-2, 1e-3][e];
            let tau = [x, y, z];
            let back = f_eps(&g_eps(&tau, eps), eps);
            let t = norm(&tau);
            for k in 0..3 {
                prop_assert!((back[k] - tau[k]).abs() <= 1e-12 * (1.0 + t));
            }
        }

        #[test]
        fn radial_inverse_is_monotone(a in 0.0f64..20.0, b in 0.0f64..20.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(g_radial(lo, 1e-3) <= g_radial(hi, 1e-3));
        }
    }
}
