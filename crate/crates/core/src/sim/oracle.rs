//! Latent-data oracle for the Bloom-type decomposition.

use std::collections::BTreeMap;

use super::SimDraw;
use crate::data::Cohort;
use crate::error::{IdidError, Result};

fn treat_cohorts(draw: &SimDraw) -> Result<&[Cohort]> {
    draw.latent.treat_cohort.as_deref().ok_or_else(|| {
        IdidError::Domain("draw has no treatment cohorts (absorbing design only)".into())
    })
}

/// `(ATT_oracle(g, t, e), P̂(G = g | D_t = 1, E = e))` for every `g ≤ t`
/// with treated units, from simulated potential outcomes.
pub fn bloom_weights(draw: &SimDraw, e: u32, t: u32) -> Result<BTreeMap<u32, (f64, f64)>> {
    let g = treat_cohorts(draw)?;
    let l = &draw.latent;
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (i, gi) in g.iter().enumerate() {
        if !l.exposure[i].is(e) || l.d(i, t) == 0 {
            continue;
        }
        let Cohort::Period(gi) = *gi else {
            unreachable!("treated unit without a treatment cohort")
        };
        let slot = sums.entry(gi).or_insert((0.0, 0));
        slot.0 += l.y1(i, t) - l.y0(i, t);
        slot.1 += 1;
    }
    let total: usize = sums.values().map(|s| s.1).sum();
    if total == 0 {
        return Err(IdidError::Domain(format!(
            "no treated units with E = {e} at t = {t}"
        )));
    }
    Ok(sums
        .into_iter()
        .map(|(gi, (s, k))| (gi, (s / k as f64, k as f64 / total as f64)))
        .collect())
}

/// `Σ_{g ≤ t} ATT_oracle(g, t, e) · P̂(G = g | D_t = 1, E = e)`.
pub fn bloom_oracle(draw: &SimDraw, e: u32, t: u32) -> Result<f64> {
    Ok(bloom_weights(draw, e, t)?
        .values()
        .map(|(att, w)| att * w)
        .sum())
}

/// Direct latent complier effect: mean of `Y_t(D_t(e)) − Y_t(D_t(∞))` over
/// units of cohort `e` whose treatment is moved by exposure.
pub fn complier_effect(draw: &SimDraw, e: u32, t: u32) -> Result<f64> {
    let l = &draw.latent;
    let k0 = |i: usize| i * l.n_periods as usize + (t - 1) as usize;
    let (mut s, mut k) = (0.0, 0usize);
    for i in 0..l.n_units() {
        let j = k0(i);
        if l.exposure[i].is(e) && l.d_own[j] > l.d_never[j] {
            s += l.y1[j] - l.y0[j];
            k += 1;
        }
    }
    if k == 0 {
        return Err(IdidError::Domain(format!(
            "no compliers with E = {e} at t = {t}"
        )));
    }
    Ok(s / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{gen_exp2, gen_exp3, Exp2Config, Exp3Config};

    #[test]
    fn bloom_identity_holds_on_latents() {
        let draw = gen_exp3(
            &Exp3Config {
                n: 4000,
                ..Exp3Config::default()
            },
            12,
        )
        .unwrap();
        for e in 2..=5 {
            for t in e..=5 {
                let w = bloom_weights(&draw, e, t).unwrap();
                assert!(w.keys().all(|&g| g >= e && g <= t));
                assert!((w.values().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
                let lhs = complier_effect(&draw, e, t).unwrap();
                assert!((lhs - bloom_oracle(&draw, e, t).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn horizon_zero_oracle_is_single_cohort() {
        let draw = gen_exp3(
            &Exp3Config {
                n: 4000,
                ..Exp3Config::default()
            },
            13,
        )
        .unwrap();
        for e in 2..=5 {
            let w = bloom_weights(&draw, e, e).unwrap();
            assert_eq!(w.len(), 1);
            assert_eq!(w[&e].1, 1.0);
        }
    }

    #[test]
    fn oracle_needs_absorbing_design() {
        let draw = gen_exp2(
            &Exp2Config {
                n: 100,
                ..Exp2Config::default()
            },
            1,
        )
        .unwrap();
        assert!(matches!(
            bloom_oracle(&draw, 2, 2),
            Err(IdidError::Domain(_))
        ));
    }
}
