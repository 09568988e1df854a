//! The three simulation designs.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Latent, SimDraw, Truth};
use crate::data::{Cohort, ControlKind, Covariates, Dataset, PanelDataset, RcDataset, Sampling};
use crate::error::{IdidError, Result};
use crate::nuisance::expit;
use crate::rng::{self, Stream};

fn normal(r: &mut Stream) -> f64 {
    r.sample(StandardNormal)
}

fn bit(b: bool) -> u8 {
    u8::from(b)
}

/// Two-period design with one exposure cohort and optional misspecification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exp1Config {
    pub n: usize,
    /// Exposure index linear in X (`true`) or nonlinear.
    pub ps_correct: bool,
    /// Outcome and treatment index linear in X (`true`) or nonlinear.
    pub or_correct: bool,
    pub sampling: Sampling,
    pub tau: f64,
    pub kappa: f64,
    /// Probability of being sampled in period 2 under repeated cross-sections.
    pub lambda: f64,
}

impl Exp1Config {
    /// Designs 1 to 4: both correct, propensity wrong, outcome wrong, both wrong.
    pub fn dgp(dgp: u8, n: usize, sampling: Sampling) -> Result<Self> {
        let (ps_correct, or_correct) = match dgp {
            1 => (true, true),
            2 => (false, true),
            3 => (true, false),
            4 => (false, false),
            other => return Err(IdidError::Config(format!("design {other} not in 1..=4"))),
        };
        Ok(Exp1Config {
            n,
            ps_correct,
            or_correct,
            sampling,
            tau: 1.0,
            kappa: 1.0,
            lambda: 0.5,
        })
    }
}

fn h_linear(x1: f64, x2: f64) -> f64 {
    0.8 * x1 - 0.5 * x2
}

fn h_nonlinear(x1: f64, x2: f64) -> f64 {
    0.8 * x1.sin() - 0.5 * f64::from(u8::from(x2 > 0.0)) + 0.3 * x1 * x2
}

/// Per-unit draws shared by every design before assembly.
struct Units {
    n_periods: u32,
    exposure: Vec<Cohort>,
    covariates: Covariates,
    group: Option<Vec<String>>,
    d_never: Vec<u8>,
    d_own: Vec<u8>,
    y0: Vec<f64>,
    y1: Vec<f64>,
    hidden: Option<Vec<f64>>,
    treat_cohort: Option<Vec<Cohort>>,
}

impl Units {
    /// Build the observed dataset. Under repeated cross-sections `period_of`
    /// picks the sampled period of each unit.
    fn assemble(
        self,
        sampling: Sampling,
        mut period_of: impl FnMut(usize) -> u32,
        truth: Truth,
    ) -> Result<SimDraw> {
        let n = self.exposure.len();
        let tt = self.n_periods as usize;
        let mut latent = Latent {
            n_periods: self.n_periods,
            exposure: self.exposure,
            d_never: self.d_never,
            d_own: self.d_own,
            y0: self.y0,
            y1: self.y1,
            hidden: self.hidden,
            treat_cohort: self.treat_cohort,
            row_unit: None,
        };
        let dataset = match sampling {
            Sampling::Panel => {
                let y: Vec<f64> = (0..n * tt)
                    .map(|k| latent.y(k / tt, (k % tt) as u32 + 1))
                    .collect();
                Dataset::Panel(PanelDataset::new(
                    (1..=n).map(|i| i.to_string()).collect(),
                    self.n_periods,
                    y,
                    latent.d_own.clone(),
                    latent.exposure.clone(),
                    self.covariates,
                    self.group,
                )?)
            }
            Sampling::Rc => {
                let periods: Vec<u32> = (0..n).map(&mut period_of).collect();
                // rows ordered by (period, unit) so the dataset keeps this order
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by_key(|&i| periods[i]);
                let rc = RcDataset::new(
                    self.n_periods,
                    order.iter().map(|&i| latent.y(i, periods[i])).collect(),
                    order.iter().map(|&i| latent.d(i, periods[i])).collect(),
                    order.iter().map(|&i| latent.exposure[i]).collect(),
                    order.iter().map(|&i| periods[i]).collect(),
                    self.covariates.select(&order),
                    self.group
                        .map(|g| order.iter().map(|&i| g[i].clone()).collect()),
                )?;
                latent.row_unit = Some(order);
                Dataset::Rc(rc)
            }
        };
        Ok(SimDraw {
            dataset,
            latent,
            truth,
        })
    }
}

pub fn gen_exp1(cfg: &Exp1Config, seed: u64) -> Result<SimDraw> {
    if cfg.n < 2 {
        return Err(IdidError::Domain("need at least two units".into()));
    }
    let mut r = rng::stream(seed, &[1]);
    let n = cfg.n;
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut exposure = Vec::with_capacity(n);
    let mut d_never = Vec::with_capacity(2 * n);
    let mut d_own = Vec::with_capacity(2 * n);
    let mut y0 = Vec::with_capacity(2 * n);
    let mut y1 = Vec::with_capacity(2 * n);
    let mut period = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = (normal(&mut r), normal(&mut r));
        let g_ps = if cfg.ps_correct {
            h_linear(a, b)
        } else {
            h_nonlinear(a, b)
        };
        let s = if cfg.or_correct {
            h_linear(a, b)
        } else {
            h_nonlinear(a, b)
        };
        let exposed = r.random::<f64>() < expit(g_ps);
        let u: f64 = r.random();
        for t in 1..=2u32 {
            let idx = 0.2 + s - 0.4 * f64::from(t);
            let never = u <= expit(idx);
            // exposure moves treatment from the exposure period on
            let own = if exposed && t >= 2 {
                u <= expit(idx + cfg.kappa)
            } else {
                never
            };
            let base = (1.0 + 0.8 * f64::from(t - 1)) * s + 0.2 * normal(&mut r);
            d_never.push(bit(never));
            d_own.push(bit(own));
            y0.push(base);
            y1.push(base + cfg.tau);
        }
        period.push(if r.random::<f64>() < cfg.lambda { 2 } else { 1 });
        x1.push(a);
        x2.push(b);
        exposure.push(if exposed {
            Cohort::Period(2)
        } else {
            Cohort::Never
        });
    }
    let truth = Truth {
        latt: BTreeMap::from([((2, 2), cfg.tau)]),
        ..Truth::default()
    };
    Units {
        n_periods: 2,
        exposure,
        covariates: Covariates::new(vec!["x1".into(), "x2".into()], vec![x1, x2])?,
        group: None,
        d_never,
        d_own,
        y0,
        y1,
        hidden: None,
        treat_cohort: None,
    }
    .assemble(cfg.sampling, |i| period[i], truth)
}

/// Staggered exposure with a time-varying hidden confounder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exp2Config {
    pub n: usize,
    pub n_periods: u32,
    /// Latest exposure cohort.
    pub n_e: u32,
    /// First-stage shift of the exposed treatment index.
    pub delta: f64,
    pub tau: f64,
    /// Adds a Bernoulli(0.5) group label `F` that halves the effect when 1.
    pub with_group: bool,
    pub sampling: Sampling,
    /// Never-exposed designs include `E = ∞` in the cohort support; not-yet-exposed ones drop it.
    pub kind: ControlKind,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Exp2Config {
            n: 10_000,
            n_periods: 5,
            n_e: 5,
            delta: 1.0,
            tau: 1.0,
            with_group: false,
            sampling: Sampling::Panel,
            kind: ControlKind::NeverExposed,
        }
    }
}

/// Cohort support, in listing order `∞, 2, 3, …`, with multinomial-logit
/// slopes spaced evenly over [0.1, 0.3] in that order.
pub fn cohort_support(n_e: u32, include_never: bool) -> Vec<(Cohort, f64)> {
    let mut support: Vec<Cohort> = Vec::new();
    if include_never {
        support.push(Cohort::Never);
    }
    support.extend((2..=n_e).map(Cohort::Period));
    let k = support.len();
    support
        .into_iter()
        .enumerate()
        .map(|(j, c)| {
            let beta = if k == 1 {
                0.1
            } else {
                0.1 + 0.2 * j as f64 / (k - 1) as f64
            };
            (c, beta)
        })
        .collect()
}

fn draw_cohort(r: &mut Stream, support: &[(Cohort, f64)], x: f64) -> Cohort {
    let w: Vec<f64> = support.iter().map(|&(_, b)| (b * x).exp()).collect();
    let mut u = r.random::<f64>() * w.iter().sum::<f64>();
    for (&(c, _), wi) in support.iter().zip(&w) {
        if u < *wi {
            return c;
        }
        u -= wi;
    }
    support[support.len() - 1].0
}

/// Shared machinery of the staggered designs: `absorbing` switches to
/// one-sided, absorbing treatment with cohort-horizon effects.
#[allow(clippy::too_many_arguments)]
fn gen_staggered(
    n: usize,
    n_periods: u32,
    support: &[(Cohort, f64)],
    delta: f64,
    effect: &dyn Fn(Option<u32>, u32, bool) -> f64,
    with_group: bool,
    absorbing: bool,
    confounded: bool,
    sampling: Sampling,
    truth: Truth,
    r: &mut Stream,
) -> Result<SimDraw> {
    let tt = n_periods as usize;
    let mut x = Vec::with_capacity(n);
    let mut exposure = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    let mut d_never = Vec::with_capacity(n * tt);
    let mut d_own = Vec::with_capacity(n * tt);
    let mut y0 = Vec::with_capacity(n * tt);
    let mut y1 = Vec::with_capacity(n * tt);
    let mut hidden = Vec::with_capacity(n * tt);
    let mut treat_cohort = Vec::with_capacity(n);
    let mut period = Vec::with_capacity(n);
    let scale = f64::from(n_periods);
    for _ in 0..n {
        let xi = normal(r);
        let e = draw_cohort(r, support, xi);
        let nu = r.random_range(-1.0..-0.2);
        let eta = normal(r);
        let f = with_group && r.random::<bool>();
        let mut g: Option<u32> = None;
        let mut unit_y0 = Vec::with_capacity(tt);
        let mut unit_noise = Vec::with_capacity(tt);
        for t in 1..=n_periods {
            let h = if confounded { normal(r) } else { 0.0 };
            let u: f64 = r.random();
            let lt = nu + 0.5 * xi + h + f64::from(t) / (8.0 * scale);
            let exposed = !e.unexposed_at(t);
            let (never, own) = if absorbing {
                let on = exposed && (g.is_some() || u <= expit(lt + delta));
                (false, on)
            } else {
                let never = u <= expit(lt);
                (
                    never,
                    if exposed {
                        u <= expit(lt + delta)
                    } else {
                        never
                    },
                )
            };
            if own && g.is_none() {
                g = Some(t);
            }
            let base = eta + xi + h + f64::from(t) / scale + normal(r);
            d_never.push(bit(never));
            d_own.push(bit(own));
            hidden.push(h);
            unit_y0.push(base);
            unit_noise.push(normal(r));
        }
        for (j, t) in (1..=n_periods).enumerate() {
            y0.push(unit_y0[j]);
            y1.push(unit_y0[j] + effect(g, t, f) + unit_noise[j]);
        }
        period.push(r.random_range(1..=n_periods));
        x.push(xi);
        exposure.push(e);
        group.push(if f { "1" } else { "0" }.to_owned());
        treat_cohort.push(g.map_or(Cohort::Never, Cohort::Period));
    }
    Units {
        n_periods,
        exposure,
        covariates: Covariates::new(vec!["x".into()], vec![x])?,
        group: with_group.then_some(group),
        d_never,
        d_own,
        y0,
        y1,
        hidden: Some(hidden),
        treat_cohort: absorbing.then_some(treat_cohort),
    }
    .assemble(sampling, |i| period[i], truth)
}

pub fn gen_exp2(cfg: &Exp2Config, seed: u64) -> Result<SimDraw> {
    if cfg.n < 2 || cfg.n_periods < 2 || cfg.n_e < 2 || cfg.n_e > cfg.n_periods {
        return Err(IdidError::Domain("need n ≥ 2 and 2 ≤ n_E ≤ 𝒯".into()));
    }
    let support = cohort_support(cfg.n_e, cfg.kind == ControlKind::NeverExposed);
    let mut truth = Truth::default();
    if cfg.with_group {
        truth.group_latt =
            BTreeMap::from([("0".to_owned(), cfg.tau), ("1".to_owned(), 0.5 * cfg.tau)]);
    } else {
        for e in 2..=cfg.n_e {
            for t in e..=cfg.n_periods {
                truth.latt.insert((e, t), cfg.tau);
            }
        }
    }
    let tau = cfg.tau;
    let effect = move |_: Option<u32>, _: u32, f: bool| if f { 0.5 * tau } else { tau };
    gen_staggered(
        cfg.n,
        cfg.n_periods,
        &support,
        cfg.delta,
        &effect,
        cfg.with_group,
        false,
        true,
        cfg.sampling,
        truth,
        &mut rng::stream(seed, &[2]),
    )
}

/// Absorbing treatment, one-sided compliance and never-exposed controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exp3Config {
    pub n: usize,
    pub n_periods: u32,
    pub delta: f64,
    pub sampling: Sampling,
    /// `false` removes the hidden confounder from treatment and outcomes.
    pub confounded: bool,
}

impl Default for Exp3Config {
    fn default() -> Self {
        Exp3Config {
            n: 10_000,
            n_periods: 5,
            delta: 1.0,
            sampling: Sampling::Panel,
            confounded: true,
        }
    }
}

/// Effect of treatment started in `g` at period `t`.
pub fn horizon_effect(g: u32, t: u32) -> f64 {
    (f64::from(t) - f64::from(g) + 1.0) / 2.0
}

pub fn gen_exp3(cfg: &Exp3Config, seed: u64) -> Result<SimDraw> {
    if cfg.n < 2 || cfg.n_periods < 2 {
        return Err(IdidError::Domain("need n ≥ 2 and 𝒯 ≥ 2".into()));
    }
    let support = cohort_support(cfg.n_periods, true);
    let mut truth = Truth::default();
    for g in 2..=cfg.n_periods {
        for t in g..=cfg.n_periods {
            truth.att.insert((g, t), horizon_effect(g, t));
        }
    }
    let effect = |g: Option<u32>, t: u32, _: bool| g.map_or(0.0, |g| horizon_effect(g, t));
    gen_staggered(
        cfg.n,
        cfg.n_periods,
        &support,
        cfg.delta,
        &effect,
        false,
        true,
        cfg.confounded,
        cfg.sampling,
        truth,
        &mut rng::stream(seed, &[3]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    /// Observed data must equal the latent reconstruction row by row.
    fn check_reconstruction(draw: &SimDraw) {
        let l = &draw.latent;
        match &draw.dataset {
            Dataset::Panel(p) => {
                for i in 0..p.n_units() {
                    for t in 1..=p.n_periods() {
                        assert_eq!(p.d(i, t), l.d(i, t));
                        let own = match l.exposure[i] {
                            c if c.unexposed_at(t) => l.d_never[l.at(i, t)],
                            _ => l.d_own[l.at(i, t)],
                        };
                        assert_eq!(p.d(i, t), own);
                        let picked = if p.d(i, t) == 1 {
                            l.y1(i, t)
                        } else {
                            l.y0(i, t)
                        };
                        assert_eq!(p.y(i, t), picked);
                    }
                }
            }
            Dataset::Rc(rc) => {
                let units = l.row_unit.as_ref().unwrap();
                for (row, &i) in units.iter().enumerate() {
                    let t = rc.period()[row];
                    assert_eq!(rc.d()[row], l.d(i, t));
                    assert_eq!(rc.y()[row], l.y(i, t));
                    assert_eq!(rc.exposure()[row], l.exposure[i]);
                }
            }
        }
    }

    #[test]
    fn exp1_truth_and_reconstruction() {
        for dgp in 1..=4 {
            for sampling in [Sampling::Panel, Sampling::Rc] {
                let draw = gen_exp1(&Exp1Config::dgp(dgp, 300, sampling).unwrap(), 5).unwrap();
                assert_eq!(draw.truth.latt[&(2, 2)], 1.0);
                check_reconstruction(&draw);
            }
        }
        assert_eq!(
            gen_exp1(&Exp1Config::dgp(1, 50, Sampling::Panel).unwrap(), 9).unwrap(),
            gen_exp1(&Exp1Config::dgp(1, 50, Sampling::Panel).unwrap(), 9).unwrap()
        );
    }

    #[test]
    fn exp1_misspecified_propensity_leaves_outcomes_alone() {
        let a = gen_exp1(&Exp1Config::dgp(1, 200, Sampling::Panel).unwrap(), 3).unwrap();
        let b = gen_exp1(&Exp1Config::dgp(2, 200, Sampling::Panel).unwrap(), 3).unwrap();
        // the same seed yields the same Y(0) paths; only exposure moves
        assert_eq!(a.latent.y0, b.latent.y0);
        assert_ne!(a.latent.exposure, b.latent.exposure);
    }

    #[test]
    fn rc_period_frequencies_match_lambda() {
        let n = 20_000;
        let draw = gen_exp1(&Exp1Config::dgp(1, n, Sampling::Rc).unwrap(), 11).unwrap();
        let Dataset::Rc(rc) = &draw.dataset else {
            unreachable!()
        };
        let share = rc.period().iter().filter(|&&t| t == 2).count() as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((share - 0.5).abs() < 4.0 * se);
        let cfg = Exp2Config {
            n,
            sampling: Sampling::Rc,
            ..Exp2Config::default()
        };
        let draw = gen_exp2(&cfg, 2).unwrap();
        let Dataset::Rc(rc) = &draw.dataset else {
            unreachable!()
        };
        let p = 0.2;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for t in 1..=5 {
            let share = rc.period().iter().filter(|&&s| s == t).count() as f64 / n as f64;
            assert!((share - p).abs() < 4.0 * se, "period {t}: {share}");
        }
        check_reconstruction(&draw);
    }

    #[test]
    fn exp2_support_and_confounding() {
        let draw = gen_exp2(
            &Exp2Config {
                n: 5000,
                ..Exp2Config::default()
            },
            1,
        )
        .unwrap();
        check_reconstruction(&draw);
        assert!(draw.truth.latt.values().all(|&v| v == 1.0));
        assert_eq!(draw.truth.latt.len(), 10);
        let l = &draw.latent;
        let h = l.hidden.as_ref().unwrap();
        let d: Vec<f64> = l.d_own.iter().map(|&v| f64::from(v)).collect();
        let y: Vec<f64> = (0..l.d_own.len())
            .map(|k| l.y(k / 5, (k % 5) as u32 + 1))
            .collect();
        assert!(corr(h, &d) > 0.0 && corr(h, &y) > 0.0);
        let nye = gen_exp2(
            &Exp2Config {
                n: 2000,
                kind: ControlKind::NotYetExposed,
                ..Exp2Config::default()
            },
            1,
        )
        .unwrap();
        assert!(nye.latent.exposure.iter().all(|c| c.period().is_some()));
        assert!(draw.latent.exposure.contains(&Cohort::Never));
    }

    #[test]
    fn slope_grid_follows_listing_order() {
        let s = cohort_support(5, true);
        assert_eq!(s[0], (Cohort::Never, 0.1));
        assert!((s[4].1 - 0.3).abs() < 1e-15 && (s[2].1 - 0.2).abs() < 1e-15);
        let s = cohort_support(5, false);
        assert_eq!(s.len(), 4);
        assert_eq!(s[0], (Cohort::Period(2), 0.1));
    }

    #[test]
    fn exp2_group_variant_labels() {
        let draw = gen_exp2(
            &Exp2Config {
                n: 400,
                with_group: true,
                ..Exp2Config::default()
            },
            4,
        )
        .unwrap();
        let g = draw.dataset.group().unwrap();
        assert!(g.iter().any(|v| v == "0") && g.iter().any(|v| v == "1"));
        assert_eq!(draw.truth.group_latt["0"] - draw.truth.group_latt["1"], 0.5);
    }

    #[test]
    fn exp3_structure() {
        let draw = gen_exp3(
            &Exp3Config {
                n: 3000,
                ..Exp3Config::default()
            },
            6,
        )
        .unwrap();
        check_reconstruction(&draw);
        let l = &draw.latent;
        let g = l.treat_cohort.as_ref().unwrap();
        for (i, gi) in g.iter().enumerate() {
            let path: Vec<u8> = (1..=5).map(|t| l.d(i, t)).collect();
            assert!(path.windows(2).all(|w| w[0] <= w[1]), "absorbing");
            assert_eq!(path[0], 0);
            if l.exposure[i] == Cohort::Never {
                assert!(path.iter().all(|&d| d == 0), "one-sided");
            }
            let first = path.iter().position(|&d| d == 1).map(|p| p as u32 + 1);
            assert_eq!(gi.period(), first);
        }
        assert_eq!(draw.truth.att[&(2, 2)], 0.5);
        assert_eq!(draw.truth.att[&(2, 4)], 1.5);
        assert_eq!(draw.truth.att[&(3, 4)], 1.0);
    }
}
