//! Delta-bar-delta (DBD) and regrettable delta-bar-delta (RDBD) step
//! functions.
//!
//! Both rules move the learning rate by `eta * h_t` where
//! `h_t = <g_t, g_{t-1}>`. RDBD additionally watches the sign of consecutive
//! dot products: when `h_t * h_{t-1} < 0` the previous increment is judged
//! to have been driven by noise, and both it and the extra displacement it
//! caused are undone before the current step is taken.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_finite, check_len, Error, Result};
use crate::types::{dot, GradientEstimate, ParamVector, ScheduleState, StepOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    Plain,
    Dbd,
    Rdbd,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::Plain => "plain",
            SchedulerKind::Dbd => "dbd",
            SchedulerKind::Rdbd => "rdbd",
        })
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" => Ok(SchedulerKind::Plain),
            "dbd" => Ok(SchedulerKind::Dbd),
            "rdbd" => Ok(SchedulerKind::Rdbd),
            other => Err(Error::invalid(format!("unknown scheduler '{other}'"))),
        }
    }
}

fn check_inputs(state: &ScheduleState, x: &ParamVector, g: &GradientEstimate) -> Result<()> {
    check_len(x.len(), g.len())?;
    check_len(state.dim(), g.len())?;
    check_finite(g.values(), "gradient")?;
    Ok(())
}

fn descend(x: &[f64], g: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().zip(g).map(|(xi, gi)| xi - alpha * gi).collect()
}

fn advance(state: &mut ScheduleState, g: &GradientEstimate, h: f64, alpha: f64) {
    state.alpha = alpha;
    state.prev_update.copy_from_slice(g.values());
    state.prev_dot = h;
    state.step += 1;
}

/// `x - alpha * g`.
pub fn plain_step(x: &ParamVector, g: &GradientEstimate, alpha: f64) -> Result<Vec<f64>> {
    check_len(x.len(), g.len())?;
    Ok(descend(x.values(), g.values(), alpha))
}

/// One delta-bar-delta step. Advances `state` in place.
pub fn dbd_step(
    state: &mut ScheduleState,
    x: &ParamVector,
    g: &GradientEstimate,
) -> Result<StepOutcome> {
    check_inputs(state, x, g)?;
    let h = dot(g.values(), &state.prev_update)?;
    let alpha = state.clamp(state.alpha + state.eta * h);
    let new_values = descend(x.values(), g.values(), alpha);
    advance(state, g, h, alpha);
    Ok(StepOutcome {
        new_values,
        new_alpha: alpha,
        reverted: false,
        h,
    })
}

/// Undo one learning-rate increment `eta * h_prev` together with the weight
/// displacement `-eta * h_prev * g_prev` it produced.
///
/// Returns the reverted learning rate; `x` is corrected in place.
pub fn apply_revert(alpha: f64, x: &mut [f64], eta: f64, h_prev: f64, g_prev: &[f64]) -> f64 {
    let k = eta * h_prev;
    for (xi, gi) in x.iter_mut().zip(g_prev) {
        *xi += k * gi;
    }
    alpha - k
}

/// One regrettable delta-bar-delta step. Advances `state` in place.
///
/// `g` must have been computed at the current weights `x`, i.e. the weights
/// as left by the previous step. If the sign test fires, the revert
/// correction is applied to `x` and the descent step then uses the same `g`.
pub fn rdbd_step(
    state: &mut ScheduleState,
    x: &ParamVector,
    g: &GradientEstimate,
) -> Result<StepOutcome> {
    check_inputs(state, x, g)?;
    let h = dot(g.values(), &state.prev_update)?;
    let mut point = x.values().to_vec();
    let mut alpha = state.alpha;
    let reverted = h * state.prev_dot < 0.0;
    if reverted {
        alpha = apply_revert(
            alpha,
            &mut point,
            state.eta,
            state.prev_dot,
            &state.prev_update,
        );
    }
    let alpha = state.clamp(alpha + state.eta * h);
    let new_values = descend(&point, g.values(), alpha);
    advance(state, g, h, alpha);
    Ok(StepOutcome {
        new_values,
        new_alpha: alpha,
        reverted,
        h,
    })
}

/// Dispatch on `kind`. `Plain` keeps `alpha` fixed but still tracks `h`.
pub fn scheduled_step(
    kind: SchedulerKind,
    state: &mut ScheduleState,
    x: &ParamVector,
    g: &GradientEstimate,
) -> Result<StepOutcome> {
    match kind {
        SchedulerKind::Dbd => dbd_step(state, x, g),
        SchedulerKind::Rdbd => rdbd_step(state, x, g),
        SchedulerKind::Plain => {
            check_inputs(state, x, g)?;
            let h = dot(g.values(), &state.prev_update)?;
            let alpha = state.alpha;
            let new_values = plain_step(x, g, alpha)?;
            advance(state, g, h, alpha);
            Ok(StepOutcome {
                new_values,
                new_alpha: alpha,
                reverted: false,
                h,
            })
        }
    }
}

/// Checks a recorded revert against its contract.
///
/// `alpha_before_increment` is the learning rate before the increment that
/// was undone, `x_before_revert` the weights right before the correction.
/// Passes iff the reverted learning rate equals the pre-increment one and
/// the weight correction equals `+eta * h_prev * g_prev`, both to 1e-12
/// relative.
pub fn revert_exactness_check(
    alpha_before_increment: f64,
    x_before_revert: &[f64],
    alpha_after_revert: f64,
    x_after_revert: &[f64],
    eta: f64,
    h_prev: f64,
    g_prev: &[f64],
) -> bool {
    const TOL: f64 = 1e-12;
    let rel = |a: f64, b: f64| (a - b).abs() <= TOL * a.abs().max(b.abs());
    if x_before_revert.len() != x_after_revert.len() || x_before_revert.len() != g_prev.len() {
        return false;
    }
    if !rel(alpha_after_revert, alpha_before_increment) {
        return false;
    }
    x_before_revert
        .iter()
        .zip(x_after_revert)
        .zip(g_prev)
        .all(|((b, a), g)| rel(*a, b + eta * h_prev * g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new("x", v.to_vec()).unwrap()
    }

    fn ge(v: &[f64]) -> GradientEstimate {
        GradientEstimate::new(v.to_vec(), 0).unwrap()
    }

    fn state(alpha: f64, eta: f64, prev: &[f64], prev_dot: f64) -> ScheduleState {
        let mut s = ScheduleState::new(prev.len(), alpha, eta).unwrap();
        s.prev_update = prev.to_vec();
        s.prev_dot = prev_dot;
        s
    }

    /// Straight-line transcription of the RDBD pseudocode with explicit
    /// histories. Revert corrections act on the current weights.
    fn replay_rdbd(
        x0: &[f64],
        alpha0: f64,
        eta: f64,
        grads: &[Vec<f64>],
        clamp: (f64, f64),
    ) -> (Vec<Vec<f64>>, Vec<f64>, Vec<bool>) {
        let d = x0.len();
        let mut g_hist = vec![vec![0.0; d]];
        let mut h_hist = vec![0.0];
        let mut alpha_hist = vec![alpha0];
        let mut xs = vec![x0.to_vec()];
        let mut reverts = vec![];
        for (i, g) in grads.iter().enumerate() {
            let t = i + 1;
            let mut x = xs[t - 1].clone();
            let h: f64 = g.iter().zip(&g_hist[t - 1]).map(|(a, b)| a * b).sum();
            let mut a_prev = alpha_hist[t - 1];
            let fire = h * h_hist[t - 1] < 0.0;
            if fire {
                for k in 0..d {
                    x[k] += eta * h_hist[t - 1] * g_hist[t - 1][k];
                }
                a_prev -= eta * h_hist[t - 1];
            }
            let a = (a_prev + eta * h).clamp(clamp.0, clamp.1);
            for k in 0..d {
                x[k] -= a * g[k];
            }
            g_hist.push(g.clone());
            h_hist.push(h);
            alpha_hist.push(a);
            xs.push(x);
            reverts.push(fire);
        }
        (xs, alpha_hist, reverts)
    }

    #[test]
    fn dbd_first_step_keeps_alpha() {
        let mut s = ScheduleState::new(2, 0.005, 0.01).unwrap();
        let out = dbd_step(&mut s, &pv(&[1.0, 2.0]), &ge(&[1.0, 1.0])).unwrap();
        assert_eq!(out.h, 0.0);
        assert_eq!(out.new_alpha, 0.005);
        assert_eq!(out.new_values, vec![1.0 - 0.005, 2.0 - 0.005]);
        assert!(!out.reverted);
        assert_eq!(s.step, 1);
        assert_eq!(s.prev_update, vec![1.0, 1.0]);
    }

    #[test]
    fn dbd_agreeing_gradients_raise_alpha() {
        let mut s = state(0.005, 0.01, &[2.0, 0.0], 0.0);
        let out = dbd_step(&mut s, &pv(&[0.0, 0.0]), &ge(&[1.0, 0.0])).unwrap();
        assert_eq!(out.h, 2.0);
        assert!((out.new_alpha - 0.025).abs() < 1e-15);
        assert_eq!(s.prev_dot, 2.0);
    }

    #[test]
    fn dbd_clamps_negative_alpha() {
        // 0.005 + 0.01 * (-2) = -0.015, clamped at alpha_min = 0.
        let mut s = state(0.005, 0.01, &[-2.0, 0.0], 0.0);
        let out = dbd_step(&mut s, &pv(&[1.0, 1.0]), &ge(&[1.0, 0.0])).unwrap();
        assert_eq!(out.new_alpha, 0.0);
        assert_eq!(out.new_values, vec![1.0, 1.0]);

        let mut s = state(0.005, 0.01, &[-2.0, 0.0], 0.0);
        s.alpha_min = f64::NEG_INFINITY;
        let out = dbd_step(&mut s, &pv(&[1.0, 1.0]), &ge(&[1.0, 0.0])).unwrap();
        assert!((out.new_alpha + 0.015).abs() < 1e-15);
    }

    #[test]
    fn steps_reject_bad_inputs() {
        let mut s = ScheduleState::new(2, 0.1, 0.1).unwrap();
        assert!(matches!(
            dbd_step(&mut s, &pv(&[1.0, 1.0, 1.0]), &ge(&[1.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(rdbd_step(&mut s, &pv(&[1.0]), &ge(&[1.0])).is_err());
        assert_eq!(s.step, 0, "failed steps must not advance state");
    }

    #[test]
    fn rdbd_without_history_matches_dbd() {
        let x = pv(&[0.5, -1.0]);
        let g = ge(&[0.3, 0.7]);
        let mut a = ScheduleState::new(2, 0.005, 0.01).unwrap();
        let mut b = a.clone();
        assert_eq!(
            rdbd_step(&mut a, &x, &g).unwrap(),
            dbd_step(&mut b, &x, &g).unwrap()
        );
        assert_eq!(a, b);
    }

    #[test]
    fn rdbd_revert_fires_on_sign_flip() {
        let mut s = state(0.005, 0.01, &[1.0, 0.0], 2.0);
        let x = [0.0, 0.0];
        let g = [-3.0, 0.0];
        let out = rdbd_step(&mut s, &pv(&x), &ge(&g)).unwrap();
        assert!(out.reverted);
        assert_eq!(out.h, -3.0);
        assert_eq!(out.new_alpha, 0.0);
        // Correction +0.01 * 2 * [1, 0]; the descent step at alpha 0 adds nothing.
        assert!((out.new_values[0] - 0.02).abs() < 1e-15);
        assert_eq!(out.new_values[1], 0.0);

        // Same thing with clamping off matches the replay exactly.
        let mut s = state(0.005, 0.01, &[1.0, 0.0], 2.0);
        s.alpha_min = f64::NEG_INFINITY;
        let out = rdbd_step(&mut s, &pv(&x), &ge(&g)).unwrap();
        let expected_alpha = 0.005 - 0.01 * 2.0 + 0.01 * -3.0;
        assert!((out.new_alpha - expected_alpha).abs() < 1e-15);
        assert!((out.new_values[0] - (0.02 - expected_alpha * -3.0)).abs() < 1e-15);
    }

    #[test]
    fn rdbd_sign_agreement_stream() {
        let grads = vec![vec![1.0, 0.0]; 3];
        let (_, alphas, reverts) = replay_rdbd(
            &[0.0, 0.0],
            0.005,
            0.01,
            &grads,
            (f64::NEG_INFINITY, f64::INFINITY),
        );
        assert!((alphas[3] - 0.025).abs() < 1e-15);
        assert!(reverts.iter().all(|r| !r));

        let mut s = ScheduleState::unclamped(2, 0.005, 0.01).unwrap();
        let mut x = pv(&[0.0, 0.0]);
        for g in &grads {
            let out = rdbd_step(&mut s, &x, &ge(g)).unwrap();
            assert!(!out.reverted);
            x.assign(&out.new_values).unwrap();
        }
        assert!((s.alpha - 0.025).abs() < 1e-15);
    }

    #[test]
    fn rdbd_matches_replay_on_alternating_stream() {
        let grads: Vec<Vec<f64>> = vec![
            vec![1.0, 0.5],
            vec![0.8, 0.2],
            vec![-0.9, 0.1],
            vec![0.4, -0.3],
            vec![0.5, 0.5],
            vec![-0.2, 0.9],
            vec![0.3, 0.3],
        ];
        for clamp in [
            (0.0, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
            (0.0, 0.02),
        ] {
            let (xs, alphas, reverts) = replay_rdbd(&[1.0, -1.0], 0.01, 0.05, &grads, clamp);
            let mut s = ScheduleState::with_clamp(2, 0.01, 0.05, clamp.0, clamp.1).unwrap();
            let mut x = pv(&[1.0, -1.0]);
            for (t, g) in grads.iter().enumerate() {
                let out = rdbd_step(&mut s, &x, &ge(g)).unwrap();
                assert_eq!(out.reverted, reverts[t]);
                assert!((out.new_alpha - alphas[t + 1]).abs() < 1e-15);
                for (a, b) in out.new_values.iter().zip(&xs[t + 1]) {
                    assert!((a - b).abs() < 1e-14);
                }
                x.assign(&out.new_values).unwrap();
            }
            assert!(reverts.iter().any(|&r| r));
        }
    }

    #[test]
    fn plain_step_examples() {
        assert_eq!(
            plain_step(&pv(&[1.0, 1.0]), &ge(&[1.0, 0.0]), 0.5).unwrap(),
            vec![0.5, 1.0]
        );
        assert_eq!(
            plain_step(&pv(&[1.0, 2.0]), &ge(&[3.0, 4.0]), 0.0).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(
            plain_step(&pv(&[1.0, 2.0]), &ge(&[0.0, 0.0]), 0.7).unwrap(),
            vec![1.0, 2.0]
        );
        assert!(plain_step(&pv(&[1.0]), &ge(&[1.0, 2.0]), 0.1).is_err());
    }

    #[test]
    fn plain_kind_keeps_alpha_and_tracks_h() {
        let mut s = ScheduleState::new(1, 0.1, 0.5).unwrap();
        let x = pv(&[1.0]);
        scheduled_step(SchedulerKind::Plain, &mut s, &x, &ge(&[2.0])).unwrap();
        let out = scheduled_step(SchedulerKind::Plain, &mut s, &x, &ge(&[3.0])).unwrap();
        assert_eq!(out.h, 6.0);
        assert_eq!(out.new_alpha, 0.1);
    }

    #[test]
    fn revert_check_examples() {
        let mut x = vec![0.0, 0.0];
        let alpha = apply_revert(0.025, &mut x, 0.01, 2.0, &[1.0, 0.0]);
        assert!((alpha - 0.005).abs() < 1e-15);
        assert!(revert_exactness_check(
            0.005,
            &[0.0, 0.0],
            alpha,
            &x,
            0.01,
            2.0,
            &[1.0, 0.0]
        ));
        assert!((x[0] - 0.02).abs() < 1e-16 && x[1] == 0.0);

        let mut y = vec![0.3, -0.4];
        let a = apply_revert(0.7, &mut y, 0.01, 0.0, &[5.0, 5.0]);
        assert_eq!(a, 0.7);
        assert_eq!(y, vec![0.3, -0.4]);

        assert!(!revert_exactness_check(
            0.005,
            &[0.0],
            0.006,
            &[0.02],
            0.01,
            2.0,
            &[1.0]
        ));
        assert!(!revert_exactness_check(
            0.005,
            &[0.0],
            0.005,
            &[0.03],
            0.01,
            2.0,
            &[1.0]
        ));
    }

    #[test]
    fn scheduler_kind_parses() {
        assert_eq!(
            "RDBD".parse::<SchedulerKind>().unwrap(),
            SchedulerKind::Rdbd
        );
        assert!("nope".parse::<SchedulerKind>().is_err());
    }

    proptest! {
        #[test]
        fn revert_undoes_increment(
            alpha0 in 1e-3f64..1.0,
            eta in 1e-4f64..0.1,
            h in -10.0f64..10.0,
            g in prop::collection::vec(-5.0f64..5.0, 1..8),
            x in prop::collection::vec(-5.0f64..5.0, 8),
        ) {
            let alpha1 = alpha0 + eta * h;
            let before: Vec<f64> = x[..g.len()].to_vec();
            let mut after = before.clone();
            let reverted = apply_revert(alpha1, &mut after, eta, h, &g);
            prop_assert!(revert_exactness_check(alpha0, &before, reverted, &after, eta, h, &g));
        }

        #[test]
        fn nonnegative_products_make_rdbd_equal_dbd(
            raw in prop::collection::vec(prop::collection::vec(0.01f64..2.0, 3), 2..20),
            eta in 0.0f64..0.05,
        ) {
            // All-positive gradients keep every h >= 0, so no revert can fire.
            let mut a = ScheduleState::unclamped(3, 0.01, eta).unwrap();
            let mut b = a.clone();
            let mut xa = pv(&[0.0; 3]);
            let mut xb = xa.clone();
            for g in &raw {
                let g = ge(g);
                let oa = rdbd_step(&mut a, &xa, &g).unwrap();
                let ob = dbd_step(&mut b, &xb, &g).unwrap();
                prop_assert!(!oa.reverted);
                prop_assert_eq!(&oa.new_values, &ob.new_values);
                xa.assign(&oa.new_values).unwrap();
                xb.assign(&ob.new_values).unwrap();
            }
            prop_assert_eq!(a, b);
        }

        #[test]
        fn unclamped_alpha_stays_in_envelope(
            raw in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 1..40),
            eta in 0.0f64..0.1,
        ) {
            let sigma = raw.iter().map(|g| crate::types::norm2(g)).fold(0.0, f64::max);
            let mut s = ScheduleState::unclamped(2, 0.05, eta).unwrap();
            let mut x = pv(&[0.0, 0.0]);
            for (t, g) in raw.iter().enumerate() {
                let out = rdbd_step(&mut s, &x, &ge(g)).unwrap();
                x.assign(&out.new_values).unwrap();
                let width = (t + 1) as f64 * eta * sigma * sigma;
                prop_assert!((out.new_alpha - 0.05).abs() <= width + 1e-12);
            }
        }
    }
}
