//! Self-normalized (Hájek) weights over the rows of a cell.

use crate::data::CellData;
use crate::error::{IdidError, Result};

pub fn odds(p: f64) -> f64 {
    p / (1.0 - p)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Scale `raw` to unit sample mean.
fn normalize(cell: &CellData, raw: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    let m = mean(&raw);
    if !(m > 0.0 && m.is_finite()) {
        return Err(IdidError::degenerate(
            cell.e,
            cell.t,
            format!("no {what} weight mass"),
        ));
    }
    Ok(raw.into_iter().map(|w| w / m).collect())
}

fn indicator(b: bool) -> f64 {
    f64::from(u8::from(b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PanelWeights {
    /// `E_e / mean(E_e)`
    pub trt: Vec<f64>,
    /// `C·odds(p̂) / mean(C·odds(p̂))`
    pub ctl: Vec<f64>,
}

pub fn panel_weights(cell: &CellData, p_hat: &[f64]) -> Result<PanelWeights> {
    let trt = cell.treated.iter().map(|&z| indicator(z)).collect();
    let ctl = cell
        .treated
        .iter()
        .zip(p_hat)
        .map(|(&z, &p)| indicator(!z) * odds(p))
        .collect();
    Ok(PanelWeights {
        trt: normalize(cell, trt, "exposed")?,
        ctl: normalize(cell, ctl, "control")?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RcWeights {
    pub trt_post: Vec<f64>,
    pub trt_pre: Vec<f64>,
    pub ctl_post: Vec<f64>,
    pub ctl_pre: Vec<f64>,
    /// Period-pooled exposed weight `E_e / mean(E_e)`.
    pub trt_any: Vec<f64>,
}

impl RcWeights {
    pub fn trt(&self, i: usize) -> f64 {
        self.trt_post[i] - self.trt_pre[i]
    }

    pub fn ctl(&self, i: usize) -> f64 {
        self.ctl_post[i] - self.ctl_pre[i]
    }
}

pub fn rc_weights(cell: &CellData, p_hat: &[f64], post: &[bool]) -> Result<RcWeights> {
    let z = &cell.treated;
    let build = |f: &dyn Fn(usize) -> f64| (0..z.len()).map(f).collect::<Vec<f64>>();
    Ok(RcWeights {
        trt_post: normalize(
            cell,
            build(&|i| indicator(z[i] && post[i])),
            "exposed post-period",
        )?,
        trt_pre: normalize(
            cell,
            build(&|i| indicator(z[i] && !post[i])),
            "exposed base-period",
        )?,
        ctl_post: normalize(
            cell,
            build(&|i| indicator(!z[i] && post[i]) * odds(p_hat[i])),
            "control post-period",
        )?,
        ctl_pre: normalize(
            cell,
            build(&|i| indicator(!z[i] && !post[i]) * odds(p_hat[i])),
            "control base-period",
        )?,
        trt_any: normalize(cell, build(&|i| indicator(z[i])), "exposed")?,
    })
}
