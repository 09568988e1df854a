//! Doubly robust numerator and denominator with their influence functions.

use super::weights::{panel_weights, rc_weights, RcWeights};
use crate::data::{CellData, CellOutcome};
use crate::error::Result;
use crate::nuisance::{ArmPeriod, MeanFunctions, NuisanceFit};

/// Estimates of a ratio's two components and their per-row influence values
/// (cell rows, mean zero).
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub num: f64,
    pub den: f64,
    pub if_num: Vec<f64>,
    pub if_den: Vec<f64>,
    /// RC correction terms (κ̂_Y, κ̂_D).
    pub kappa: Option<(f64, f64)>,
}

impl Moments {
    pub fn tau(&self) -> f64 {
        self.num / self.den
    }

    /// Influence values of `num / den` by the quotient rule.
    pub fn ratio_if(&self) -> Vec<f64> {
        let tau = self.tau();
        self.if_num
            .iter()
            .zip(&self.if_den)
            .map(|(a, b)| (a - tau * b) / self.den)
            .collect()
    }
}

/// Running sum of weighted means `±mean(w·x)` and their centered influence values.
pub(crate) struct Accumulator {
    pub value: f64,
    pub infl: Vec<f64>,
}

impl Accumulator {
    pub fn new(n: usize) -> Self {
        Accumulator {
            value: 0.0,
            infl: vec![0.0; n],
        }
    }

    /// Add `sign · mean(w·x)`; returns the mean.
    pub fn add(&mut self, sign: f64, w: &[f64], x: impl Fn(usize) -> f64) -> f64 {
        let n = w.len();
        let a = (0..n).map(|i| w[i] * x(i)).sum::<f64>() / n as f64;
        self.value += sign * a;
        for (i, slot) in self.infl.iter_mut().enumerate() {
            if w[i] != 0.0 {
                *slot += sign * w[i] * (x(i) - a);
            }
        }
        a
    }
}

pub fn dr_panel(cell: &CellData, fit: &NuisanceFit) -> Result<Moments> {
    let CellOutcome::Panel { dy, dd } = &cell.outcome else {
        unreachable!("panel estimator on a repeated cross-section cell")
    };
    let MeanFunctions::Panel { m_c, g_c } = &fit.mean else {
        unreachable!()
    };
    let w = panel_weights(cell, &fit.p_hat)?;
    let part = |v: &[f64], m: &[f64]| {
        let mut acc = Accumulator::new(v.len());
        acc.add(1.0, &w.trt, |i| v[i] - m[i]);
        acc.add(-1.0, &w.ctl, |i| v[i] - m[i]);
        acc
    };
    let (n, d) = (part(dy, m_c), part(dd, g_c));
    Ok(Moments {
        num: n.value,
        den: d.value,
        if_num: n.infl,
        if_den: d.infl,
        kappa: None,
    })
}

/// One RC component: mean[(w_trt − w_ctl)(V − m^c)] + κ̂, with κ̂ returned separately.
fn rc_component(w: &RcWeights, v: &[f64], m: &ArmPeriod, post: &[bool]) -> (Accumulator, f64) {
    let n = v.len();
    let mc = |i: usize| if post[i] { m.ctl_post[i] } else { m.ctl_pre[i] };
    let gap_post = |i: usize| m.trt_post[i] - m.ctl_post[i];
    let gap_pre = |i: usize| m.trt_pre[i] - m.ctl_pre[i];
    let mut acc = Accumulator::new(n);
    acc.add(1.0, &w.trt_post, |i| v[i] - mc(i));
    acc.add(-1.0, &w.trt_pre, |i| v[i] - mc(i));
    acc.add(-1.0, &w.ctl_post, |i| v[i] - mc(i));
    acc.add(1.0, &w.ctl_pre, |i| v[i] - mc(i));
    let k1 = acc.add(1.0, &w.trt_any, gap_post);
    let k2 = acc.add(-1.0, &w.trt_post, gap_post);
    let k3 = acc.add(-1.0, &w.trt_any, gap_pre);
    let k4 = acc.add(1.0, &w.trt_pre, gap_pre);
    (acc, (k1 - k2) - (k3 - k4))
}

pub fn dr_rc(cell: &CellData, fit: &NuisanceFit) -> Result<Moments> {
    let CellOutcome::Rc { y, d, post } = &cell.outcome else {
        unreachable!("repeated cross-section estimator on a panel cell")
    };
    let MeanFunctions::Rc { y: my, d: md } = &fit.mean else {
        unreachable!()
    };
    let w = rc_weights(cell, &fit.p_hat, post)?;
    let (n, ky) = rc_component(&w, y, my, post);
    let (dn, kd) = rc_component(&w, d, md, post);
    Ok(Moments {
        num: n.value,
        den: dn.value,
        if_num: n.infl,
        if_den: dn.infl,
        kappa: Some((ky, kd)),
    })
}

pub fn dr(cell: &CellData, fit: &NuisanceFit) -> Result<Moments> {
    if cell.is_panel() {
        dr_panel(cell, fit)
    } else {
        dr_rc(cell, fit)
    }
}
