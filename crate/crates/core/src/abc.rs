//! The ABC rejection pipeline: simulate prior draws and synthetic datasets,
//! summarize them, compute divergences against the observed summaries,
//! select the acceptance threshold, and weight the accepted set.
//!
//! Every simulation owns a ChaCha substream derived from the run seed and
//! its own index, so results are reproducible bit for bit no matter how the
//! work is scheduled across threads. Retries of failed draws move to fresh
//! substreams (`attempt * n_sims + index`); the engine therefore owns the
//! stream range `[0, 101 * n_sims)` and callers that share the seed should
//! pick streams outside it.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::grid::{BaseDensity, GridSpec};
use crate::prior::{sample_prior_draw, simulate_dataset, HierarchySpec, HyperPrior, PriorDraw};
use crate::scalar::Scalar;
use crate::spline::{build_basis, SplineFitter};
use crate::summary::{divergence, epanechnikov_weight, KdeSummary};
use crate::{Error, Result};

/// Attempts per simulation index before giving up on a failing draw.
const MAX_ATTEMPTS: u32 = 100;

/// Simulations dispatched per parallel batch; results are folded in index
/// order so the batch size never affects output.
const BATCH: usize = 64;

/// Everything a run needs besides the observed data.
#[derive(Debug, Clone)]
pub struct AbcConfig<T> {
    pub n_sims: usize,
    pub m_accept: usize,
    pub seed: u64,
    pub hierarchy: HierarchySpec<T>,
    pub hyper: HyperPrior<T>,
    pub grid: GridSpec<T>,
    pub base: BaseDensity<T>,
    pub n_basis: usize,
    pub spline_order: usize,
}

impl<T: Scalar> AbcConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_sims == 0 {
            return Err(Error::invalid("n_sims must be at least 1"));
        }
        if !(1..=self.n_sims).contains(&self.m_accept) {
            return Err(Error::invalid(format!(
                "need 1 <= m_accept <= n_sims, got m_accept = {}, n_sims = {}",
                self.m_accept, self.n_sims
            )));
        }
        if self.hyper.n_levels() != self.hierarchy.levels() {
            return Err(Error::invalid(format!(
                "hyperprior levels ({}) do not match hierarchy levels ({})",
                self.hyper.n_levels(),
                self.hierarchy.levels()
            )));
        }
        // surfaces order/basis/grid inconsistencies before any simulation
        self.fitter()?;
        Ok(())
    }

    pub(crate) fn fitter(&self) -> Result<SplineFitter<T>> {
        let basis = build_basis(
            (self.grid.x_low(), self.grid.x_high()),
            self.n_basis,
            self.spline_order,
        )?;
        SplineFitter::new(&self.grid, basis)
    }
}

/// One prior simulation with its synthetic data, summaries and divergence.
/// The weight stays zero until [`accept_and_weight`] fills it in.
#[derive(Debug, Clone)]
pub struct SimulationRecord<T> {
    pub index: usize,
    pub draw: PriorDraw<T>,
    pub synthetic: Vec<Vec<T>>,
    pub summaries: Vec<KdeSummary<T>>,
    pub divergence: T,
    pub weight: T,
    pub retries: u32,
}

/// The weighted accepted set together with the threshold and the observed
/// summaries the divergences were measured against.
#[derive(Debug, Clone)]
pub struct AcceptedSet<T> {
    pub records: Vec<SimulationRecord<T>>,
    pub delta: T,
    pub observed_summaries: Vec<KdeSummary<T>>,
}

/// Run diagnostics surfaced to callers and the log channel.
#[derive(Debug, Clone, Default)]
pub struct AbcDiagnostics {
    pub total_retries: u64,
    /// (min, lower quartile, median, upper quartile, max) of all divergences.
    pub divergence_quantiles: [f64; 5],
}

pub struct AbcOutput<T> {
    pub accepted: AcceptedSet<T>,
    pub diagnostics: AbcDiagnostics,
}

struct EngineCtx<'a, T> {
    cfg: &'a AbcConfig<T>,
    fitter: SplineFitter<T>,
    observed_sizes: Vec<usize>,
    observed_summaries: Vec<KdeSummary<T>>,
}

impl<'a, T: Scalar> EngineCtx<'a, T> {
    fn new(cfg: &'a AbcConfig<T>, observed: &[Vec<T>]) -> Result<Self> {
        cfg.validate()?;
        if observed.len() != cfg.hierarchy.n_groups() {
            return Err(Error::LengthMismatch {
                what: "observed groups",
                expected: cfg.hierarchy.n_groups(),
                actual: observed.len(),
            });
        }
        if observed.len() < 2 {
            return Err(Error::invalid("estimation needs at least 2 groups"));
        }
        for (i, g) in observed.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::invalid(format!("observed group {i} is empty")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("observed data"));
            }
        }
        let fitter = cfg.fitter()?;
        let observed_summaries = observed
            .iter()
            .map(|g| KdeSummary::from_data(g, &cfg.grid, &fitter))
            .collect::<Result<Vec<_>>>()?;
        Ok(EngineCtx {
            cfg,
            fitter,
            observed_sizes: observed.iter().map(Vec::len).collect(),
            observed_summaries,
        })
    }

    fn simulate_record(&self, index: usize) -> Result<SimulationRecord<T>> {
        let cfg = self.cfg;
        let mut last_err = None;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(attempt as u64 * cfg.n_sims as u64 + index as u64);
            match self.attempt_record(index, attempt, &mut rng) {
                Ok(record) => return Ok(record),
                Err(e) => {
                    log::warn!("simulation {index} attempt {attempt} failed: {e}");
                    last_err = Some(e);
                }
            }
        }
        Err(Error::RetriesExhausted {
            index,
            attempts: MAX_ATTEMPTS,
            source: Box::new(last_err.expect("at least one attempt ran")),
        })
    }

    fn attempt_record(
        &self,
        index: usize,
        attempt: u32,
        rng: &mut ChaCha12Rng,
    ) -> Result<SimulationRecord<T>> {
        let cfg = self.cfg;
        let draw = sample_prior_draw(&cfg.hierarchy, &cfg.hyper, &cfg.grid, &cfg.base, rng)?;
        let mut synthetic = Vec::with_capacity(draw.density_grids.len());
        for (grid_values, &n) in draw.density_grids.iter().zip(&self.observed_sizes) {
            let curve = self.fitter.fit(grid_values)?;
            synthetic.push(simulate_dataset(&curve, &cfg.base, &cfg.grid, n, rng)?);
        }
        let summaries = synthetic
            .iter()
            .map(|data| KdeSummary::from_data(data, &cfg.grid, &self.fitter))
            .collect::<Result<Vec<_>>>()?;
        let d = divergence(&self.observed_summaries, &summaries, &cfg.grid)?;
        if !d.is_finite() {
            return Err(Error::NonFinite("divergence"));
        }
        Ok(SimulationRecord {
            index,
            draw,
            synthetic,
            summaries,
            divergence: d,
            weight: T::zero(),
            retries: attempt,
        })
    }

    /// Produce all records in index order, handing each to `consume` as soon
    /// as its batch completes. Batches are simulated in parallel; the fold
    /// is sequential, so any accumulation is deterministic.
    fn stream_records(&self, mut consume: impl FnMut(SimulationRecord<T>)) -> Result<()> {
        let n = self.cfg.n_sims;
        let mut start = 0;
        while start < n {
            let end = (start + BATCH).min(n);
            let batch: Vec<Result<SimulationRecord<T>>> = (start..end)
                .into_par_iter()
                .map(|i| self.simulate_record(i))
                .collect();
            for r in batch {
                consume(r?);
            }
            if end % 1024 == 0 || end == n {
                log::debug!("abc: {end}/{n} simulations done");
            }
            start = end;
        }
        Ok(())
    }
}

/// Run all `n_sims` simulations and return the full record list (divergence
/// filled, weight pending). Memory grows with `n_sims`; [`run_abc`] is the
/// bounded-memory composition used by the pipeline.
pub fn run_simulations<T: Scalar>(
    cfg: &AbcConfig<T>,
    observed: &[Vec<T>],
) -> Result<Vec<SimulationRecord<T>>> {
    let ctx = EngineCtx::new(cfg, observed)?;
    let mut out = Vec::with_capacity(cfg.n_sims);
    ctx.stream_records(|r| out.push(r))?;
    Ok(out)
}

/// The acceptance threshold: the `m_accept`-th smallest divergence.
pub fn select_threshold<T: Scalar>(divergences: &[T], m_accept: usize) -> Result<T> {
    if divergences.is_empty() {
        return Err(Error::EmptyInput("divergences"));
    }
    if m_accept == 0 || m_accept > divergences.len() {
        return Err(Error::invalid(format!(
            "need 1 <= m_accept <= {}, got {m_accept}",
            divergences.len()
        )));
    }
    let mut sorted = divergences.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite divergences"));
    Ok(sorted[m_accept - 1])
}

/// Keep the `m_accept` records with the smallest divergences (ties at the
/// threshold broken by simulation index, lower first) and attach
/// Epanechnikov weights. The record sitting exactly at the threshold gets
/// weight zero but stays in the set for diagnostics.
pub fn accept_and_weight<T: Scalar>(
    records: Vec<SimulationRecord<T>>,
    delta: T,
    m_accept: usize,
    observed_summaries: Vec<KdeSummary<T>>,
) -> Result<AcceptedSet<T>> {
    if delta <= T::zero() {
        // only possible when every retained divergence is zero, in which
        // case the Epanechnikov weights are identically degenerate
        return Err(Error::ZeroWeights);
    }
    let mut records = records;
    records.sort_by(|a, b| {
        a.divergence
            .partial_cmp(&b.divergence)
            .expect("finite divergences")
            .then(a.index.cmp(&b.index))
    });
    records.truncate(m_accept);
    if records.len() < m_accept {
        return Err(Error::invalid(format!(
            "only {} records available for m_accept = {m_accept}",
            records.len()
        )));
    }
    debug_assert!(records.iter().all(|r| r.divergence <= delta));
    let mut any_positive = false;
    for r in &mut records {
        r.weight = epanechnikov_weight(r.divergence, delta)?;
        any_positive |= r.weight > T::zero();
    }
    if !any_positive {
        return Err(Error::ZeroWeights);
    }
    records.sort_by_key(|r| r.index);
    Ok(AcceptedSet {
        records,
        delta,
        observed_summaries,
    })
}

/// End-to-end ABC rejection run with bounded memory: divergences of all
/// simulations are kept, but full records are retained only while they are
/// still among the `m_accept` best seen so far.
pub fn run_abc<T: Scalar>(cfg: &AbcConfig<T>, observed: &[Vec<T>]) -> Result<AbcOutput<T>> {
    let ctx = EngineCtx::new(cfg, observed)?;
    let mut divergences: Vec<T> = Vec::with_capacity(cfg.n_sims);
    let mut retries: u64 = 0;
    // kept sorted by (divergence, index); worst kept record at the back
    let mut best: Vec<SimulationRecord<T>> = Vec::with_capacity(cfg.m_accept + 1);
    ctx.stream_records(|record| {
        divergences.push(record.divergence);
        retries += record.retries as u64;
        let key = (record.divergence, record.index);
        let pos = best
            .partition_point(|r| (r.divergence, r.index) <= key);
        if pos < cfg.m_accept {
            best.insert(pos, record);
            best.truncate(cfg.m_accept);
        }
    })?;

    let delta = select_threshold(&divergences, cfg.m_accept)?;
    let diagnostics = AbcDiagnostics {
        total_retries: retries,
        divergence_quantiles: divergence_quantiles(&divergences),
    };
    log::info!(
        "abc: {} sims, {} retries, divergence quantiles {:?}",
        cfg.n_sims,
        retries,
        diagnostics.divergence_quantiles
    );
    let accepted = accept_and_weight(best, delta, cfg.m_accept, ctx.observed_summaries)?;
    Ok(AbcOutput {
        accepted,
        diagnostics,
    })
}

fn divergence_quantiles<T: Scalar>(divergences: &[T]) -> [f64; 5] {
    let mut sorted: Vec<f64> = divergences
        .iter()
        .map(|d| d.to_f64().unwrap_or(f64::NAN))
        .collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |q: f64| sorted[((sorted.len() - 1) as f64 * q).round() as usize];
    [at(0.0), at(0.25), at(0.5), at(0.75), at(1.0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::prior::GammaParams;

    fn small_config(n_sims: usize, m_accept: usize, seed: u64) -> AbcConfig<f64> {
        let base = BaseDensity::uniform(0.0, 1.0).unwrap();
        AbcConfig {
            n_sims,
            m_accept,
            seed,
            hierarchy: HierarchySpec::two_level(3, -10.0).unwrap(),
            hyper: HyperPrior::uniform_levels(
                2,
                GammaParams::new(3.0, 5.0).unwrap(),
                GammaParams::new(1.0, 0.1).unwrap(),
            )
            .unwrap(),
            grid: build_grid(&base, 0.0, 40).unwrap(),
            base,
            n_basis: 12,
            spline_order: 4,
        }
    }

    fn toy_observed() -> Vec<Vec<f64>> {
        vec![
            vec![0.1, 0.2, 0.3, 0.42, 0.55, 0.2, 0.31],
            vec![0.5, 0.6, 0.7, 0.8, 0.65, 0.72],
            vec![0.25, 0.45, 0.65, 0.85, 0.15],
        ]
    }

    #[test]
    fn single_simulation_has_finite_divergence() {
        let cfg = small_config(1, 1, 17);
        let records = run_simulations(&cfg, &toy_observed()).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].divergence.is_finite());
        assert_eq!(records[0].synthetic[0].len(), 7);
        assert_eq!(records[0].synthetic[1].len(), 6);
        assert_eq!(records[0].synthetic[2].len(), 5);
    }

    #[test]
    fn same_seed_reproduces_divergences() {
        let cfg = small_config(12, 4, 99);
        let a = run_simulations(&cfg, &toy_observed()).unwrap();
        let b = run_simulations(&cfg, &toy_observed()).unwrap();
        let da: Vec<f64> = a.iter().map(|r| r.divergence).collect();
        let db: Vec<f64> = b.iter().map(|r| r.divergence).collect();
        assert_eq!(da, db);
    }

    #[test]
    fn divergences_have_positive_spread() {
        let cfg = small_config(60, 10, 7);
        let records = run_simulations(&cfg, &toy_observed()).unwrap();
        let max = records.iter().map(|r| r.divergence).fold(0.0, f64::max);
        let min = records
            .iter()
            .map(|r| r.divergence)
            .fold(f64::INFINITY, f64::min);
        assert!(max > min);
    }

    #[test]
    fn threshold_is_mth_order_statistic() {
        assert_eq!(select_threshold(&[3.0, 1.0, 2.0], 2).unwrap(), 2.0);
        assert_eq!(select_threshold(&[3.0, 1.0, 2.0], 3).unwrap(), 3.0);
        assert_eq!(select_threshold(&[5.0, 5.0, 5.0], 2).unwrap(), 5.0);
        assert!(select_threshold::<f64>(&[], 1).is_err());
        assert!(select_threshold(&[1.0], 2).is_err());
    }

    fn dummy_records(divs: &[f64]) -> Vec<SimulationRecord<f64>> {
        let cfg = small_config(1, 1, 5);
        let base = run_simulations(&cfg, &toy_observed()).unwrap().remove(0);
        divs.iter()
            .enumerate()
            .map(|(i, &d)| {
                let mut r = base.clone();
                r.index = i;
                r.divergence = d;
                r
            })
            .collect()
    }

    #[test]
    fn weights_follow_epanechnikov() {
        let delta = 2.0;
        let records = dummy_records(&[0.0, 1.0, 2.0]);
        let set = accept_and_weight(records, delta, 3, vec![]).unwrap();
        let w: Vec<f64> = set.records.iter().map(|r| r.weight).collect();
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 0.75).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn tie_break_is_by_index() {
        let records = dummy_records(&[1.0, 1.0, 1.0, 0.5]);
        let set = accept_and_weight(records, 1.0, 3, vec![]).unwrap();
        let kept: Vec<usize> = set.records.iter().map(|r| r.index).collect();
        assert_eq!(kept, vec![0, 1, 3]);
    }

    #[test]
    fn shuffled_records_accept_same_multiset() {
        let divs = [0.9, 0.1, 0.5, 0.7, 0.3];
        let a = accept_and_weight(dummy_records(&divs), 0.7, 4, vec![]).unwrap();
        let mut shuffled = dummy_records(&divs);
        shuffled.reverse();
        let b = accept_and_weight(shuffled, 0.7, 4, vec![]).unwrap();
        let mut wa: Vec<(f64, f64)> = a.records.iter().map(|r| (r.divergence, r.weight)).collect();
        let mut wb: Vec<(f64, f64)> = b.records.iter().map(|r| (r.divergence, r.weight)).collect();
        wa.sort_by(|x, y| x.partial_cmp(y).unwrap());
        wb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(wa, wb);
    }

    #[test]
    fn all_records_at_threshold_is_an_error() {
        let records = dummy_records(&[1.0, 1.0]);
        assert!(matches!(
            accept_and_weight(records, 1.0, 2, vec![]),
            Err(Error::ZeroWeights)
        ));
    }

    #[test]
    fn run_abc_matches_run_simulations_selection() {
        let cfg = small_config(50, 8, 31);
        let observed = toy_observed();
        let out = run_abc(&cfg, &observed).unwrap();
        let records = run_simulations(&cfg, &observed).unwrap();
        let divs: Vec<f64> = records.iter().map(|r| r.divergence).collect();
        let delta = select_threshold(&divs, 8).unwrap();
        assert_eq!(out.accepted.delta, delta);
        let manual = accept_and_weight(records, delta, 8, vec![]).unwrap();
        let a: Vec<(usize, f64, f64)> = out
            .accepted
            .records
            .iter()
            .map(|r| (r.index, r.divergence, r.weight))
            .collect();
        let b: Vec<(usize, f64, f64)> = manual
            .records
            .iter()
            .map(|r| (r.index, r.divergence, r.weight))
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn increasing_m_accept_keeps_previous_records() {
        let cfg = small_config(40, 5, 3);
        let observed = toy_observed();
        let small = run_abc(&cfg, &observed).unwrap();
        let mut cfg_big = small_config(40, 12, 3);
        cfg_big.seed = cfg.seed;
        let big = run_abc(&cfg_big, &observed).unwrap();
        let big_indices: Vec<usize> = big.accepted.records.iter().map(|r| r.index).collect();
        for r in &small.accepted.records {
            assert!(big_indices.contains(&r.index));
        }
    }

    #[test]
    fn coupling_forces_zero_divergence() {
        let cfg = small_config(25, 6, 77);
        let records = run_simulations(&cfg, &toy_observed()).unwrap();
        let target = 9usize;
        let pseudo_observed = records[target].synthetic.clone();
        let replayed = run_simulations(&cfg, &pseudo_observed).unwrap();
        assert_eq!(replayed[target].divergence, 0.0);
        let divs: Vec<f64> = replayed.iter().map(|r| r.divergence).collect();
        let delta = select_threshold(&divs, 6).unwrap();
        let set = accept_and_weight(replayed, delta, 6, vec![]).unwrap();
        let rec = set.records.iter().find(|r| r.index == target).unwrap();
        assert_eq!(rec.weight, 1.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = small_config(30, 6, 11);
        let observed = toy_observed();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_abc(&cfg, &observed).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_abc(&cfg, &observed).unwrap());
        assert_eq!(one.accepted.delta, four.accepted.delta);
        for (a, b) in one.accepted.records.iter().zip(&four.accepted.records) {
            assert_eq!(a.index, b.index);
            assert_eq!(a.divergence, b.divergence);
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.draw.leaf_latents, b.draw.leaf_latents);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config(10, 11, 1);
        assert!(cfg.validate().is_err());
        cfg.m_accept = 10;
        assert!(cfg.validate().is_ok());
        cfg.n_basis = 100; // larger than the 40-point grid
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_wrong_group_count() {
        let cfg = small_config(5, 2, 1);
        let observed = vec![vec![0.5, 0.6]; 4];
        assert!(run_simulations(&cfg, &observed).is_err());
        let observed = vec![vec![0.5, 0.6]; 3];
        assert!(run_simulations(&cfg, &observed).is_ok());
    }
}
