//! The `verify` bundle: every numerical check, each reported as one item.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::corpus::EncodedCorpus;
use crate::error::Error;
use crate::model::{collect_hidden_states, forward_hidden, layer_norm, HiddenStateBatch, ModelParams};
use crate::numerics::{normalize_rows, DenseMatrix};
use crate::regularizer::{cosreg_fast, cosreg_naive, gram_spectrum_check, DEFAULT_GRAM_CAP};
use crate::theory::instances::{
    extreme_case_instance, feasible_instance, mirrored, points_to_matrix, random_2d_instance, symmetric_instance,
    ExtremeInstanceSpec,
};
use crate::theory::perturbation::verify_perturbation_bound;
use crate::theory::{
    check_direction_convexity, find_negative_direction, hull_contains_origin_2d, layernorm_origin_check,
    simulate_extreme_case, NegDirCertificate,
};

use super::commands::{load_checkpoint, CommandOutput};
use super::config::VerifySection;
use super::{echo_config, write_json, CliError, ExperimentConfig, EXIT_FAILURE, EXIT_INDETERMINATE, EXIT_OK};

pub const TRACE_POINTS: usize = 1000;
pub const REGULARIZER_TOL_PER_ROW: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-8;
pub const LAYER_NORM_TOL: f64 = 1e-10;
pub const EXTREME_NORM_THRESHOLD: f64 = 1e3;
pub const EXTREME_LIMIT_TOL: f64 = 1e-3;
pub const BOUNDEDNESS_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyItem {
    pub name: String,
    pub status: ItemStatus,
    pub summary: String,
    pub details: Value,
}

impl VerifyItem {
    fn new(name: &str, pass: bool, summary: String, details: Value) -> Self {
        Self {
            name: name.into(),
            status: if pass { ItemStatus::Pass } else { ItemStatus::Fail },
            summary,
            details,
        }
    }

    fn from_error(name: &str, err: Error) -> Self {
        let status = match err {
            Error::Indeterminate { .. } => ItemStatus::Indeterminate,
            _ => ItemStatus::Fail,
        };
        let details = match &err {
            Error::Indeterminate { iterations, norm, trace } => {
                json!({ "iterations": iterations, "norm": norm, "trace": trace })
            }
            _ => Value::Null,
        };
        Self {
            name: name.into(),
            status,
            summary: err.to_string(),
            details,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyBundle {
    pub config: VerifySection,
    pub items: Vec<VerifyItem>,
    pub all_pass: bool,
}

impl VerifyBundle {
    pub fn exit_code(&self) -> i32 {
        if self.items.iter().any(|i| i.status == ItemStatus::Indeterminate) {
            EXIT_INDETERMINATE
        } else if self.all_pass {
            EXIT_OK
        } else {
            EXIT_FAILURE
        }
    }
}

fn item_rng(seed: u64, item: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(item);
    rng.set_word_pos(u128::from(k) << 20);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::new(rows, cols, data).expect("consistent shape")
}

pub fn verify_regularizer(v: &VerifySection) -> VerifyItem {
    let name = "regularizer_equivalence";
    let results: Result<Vec<(usize, f64)>, Error> = (0..v.regularizer_matrices)
        .into_par_iter()
        .map(|k| {
            let mut rng = item_rng(v.seed, 1, k as u64);
            let n = rng.gen_range(2..=500);
            let d = rng.gen_range(2..=64);
            let w = gaussian(&mut rng, n, d);
            let diff = (cosreg_fast(&w)?.r_sum - cosreg_naive(&w)?.r_sum).abs();
            Ok((n, diff))
        })
        .collect();
    match results {
        Err(e) => VerifyItem::from_error(name, e),
        Ok(r) => {
            let worst = r.iter().map(|&(n, d)| d / n as f64).fold(0.0, f64::max);
            let pass = worst <= REGULARIZER_TOL_PER_ROW;
            VerifyItem::new(
                name,
                pass,
                format!("{} matrices, worst |fast - naive| / N = {worst:e}", r.len()),
                json!({ "matrices": r.len(), "worst_error_per_row": worst, "tolerance_per_row": REGULARIZER_TOL_PER_ROW }),
            )
        }
    }
}

pub fn verify_gram(v: &VerifySection) -> VerifyItem {
    let name = "gram_spectral_bound";
    let results: Result<Vec<_>, Error> = (0..v.gram_matrices)
        .into_par_iter()
        .map(|k| {
            let mut rng = item_rng(v.seed, 2, k as u64);
            let n = rng.gen_range(2..=200);
            let d = rng.gen_range(2..=32);
            let mut w = gaussian(&mut rng, n, d);
            if k % 2 == 1 {
                // shared offset: all cosines positive
                w.as_mut_slice().iter_mut().for_each(|x| *x = 0.3 * *x + 1.0);
            }
            let r = gram_spectrum_check(&normalize_rows(&w)?, DEFAULT_GRAM_CAP)?;
            Ok(((r.trace - n as f64).abs(), r.bound_holds))
        })
        .collect();
    match results {
        Err(e) => VerifyItem::from_error(name, e),
        Ok(r) => {
            let worst_trace = r.iter().map(|x| x.0).fold(0.0, f64::max);
            let checked = r.iter().filter(|x| x.1.is_some()).count();
            let violations = r.iter().filter(|x| x.1 == Some(false)).count();
            VerifyItem::new(
                name,
                worst_trace <= TRACE_TOL && violations == 0,
                format!("trace error {worst_trace:e}; bound checked on {checked} positive Gram matrices, {violations} violations"),
                json!({
                    "matrices": r.len(),
                    "worst_trace_error": worst_trace,
                    "positive_matrices": checked,
                    "bound_violations": violations,
                }),
            )
        }
    }
}

/// A second negative direction: the min-norm direction of the row-normalized
/// states, which is also uniformly negative for the raw states.
fn convexity_probe(states: &DenseMatrix, cert: &NegDirCertificate, v: &VerifySection) -> Result<bool, Error> {
    let Some(v1) = cert.direction.as_ref() else {
        return Ok(true);
    };
    let other = find_negative_direction(&normalize_rows(states)?, v.hull_tolerance, v.hull_max_iters)?;
    match other.direction {
        Some(v2) => check_direction_convexity(states, v1, &v2),
        None => Ok(false),
    }
}

pub fn verify_negative_direction_2d(v: &VerifySection) -> VerifyItem {
    let name = "negative_direction_2d";
    let results: Result<Vec<(bool, bool, bool)>, Error> = (0..v.instances_2d)
        .into_par_iter()
        .map(|k| {
            let pts = random_2d_instance(v.seed.wrapping_add(k as u64));
            let contains = hull_contains_origin_2d(&pts);
            let m = points_to_matrix(&pts);
            let cert = find_negative_direction(&m, v.hull_tolerance, v.hull_max_iters)?;
            let convex = convexity_probe(&m, &cert, v)?;
            Ok((cert.feasible == !contains, contains, convex))
        })
        .collect();
    match results {
        Err(e) => VerifyItem::from_error(name, e),
        Ok(r) => {
            let agree = r.iter().filter(|x| x.0).count();
            let containing = r.iter().filter(|x| x.1).count();
            let convex_ok = r.iter().all(|x| x.2);
            VerifyItem::new(
                name,
                agree == r.len() && convex_ok,
                format!("{agree}/{} verdicts agree with the exact hull oracle", r.len()),
                json!({
                    "instances": r.len(),
                    "agreements": agree,
                    "origin_contained": containing,
                    "direction_convexity_holds": convex_ok,
                }),
            )
        }
    }
}

pub fn verify_negative_direction_highdim(v: &VerifySection) -> VerifyItem {
    let name = "negative_direction_highdim";
    let results: Result<Vec<(bool, bool)>, Error> = (0..v.instances_highdim)
        .into_par_iter()
        .map(|k| {
            let mut rng = item_rng(v.seed, 4, k as u64);
            let dim = rng.gen_range(3..=16);
            let m = rng.gen_range(10..=60);
            let seed = rng.gen();
            let feas = feasible_instance(dim, m, seed);
            let sym = symmetric_instance(dim, m, seed ^ 0x9e37);
            let c1 = find_negative_direction(&feas, v.hull_tolerance, v.hull_max_iters)?;
            let c2 = find_negative_direction(&sym, v.hull_tolerance, v.hull_max_iters)?;
            let convex = convexity_probe(&feas, &c1, v)?;
            Ok((c1.feasible && !c2.feasible, convex))
        })
        .collect();
    match results {
        Err(e) => VerifyItem::from_error(name, e),
        Ok(r) => {
            let correct = r.iter().filter(|x| x.0).count();
            let convex_ok = r.iter().all(|x| x.1);
            VerifyItem::new(
                name,
                correct == r.len() && convex_ok,
                format!("{correct}/{} feasible/symmetric pairs classified correctly", r.len()),
                json!({ "pairs": r.len(), "correct": correct, "direction_convexity_holds": convex_ok }),
            )
        }
    }
}

pub fn verify_extreme_case(v: &VerifySection) -> VerifyItem {
    let name = "extreme_case";
    let spec = ExtremeInstanceSpec {
        seed: v.seed,
        ..ExtremeInstanceSpec::default()
    };
    let inst = extreme_case_instance(&spec);
    let mirror = mirrored(&inst);
    let run = || -> Result<VerifyItem, Error> {
        let t = simulate_extreme_case(&inst.states, &inst.fixed_embeddings, v.extreme_steps, v.extreme_lr, 0.0)?;
        let tm = simulate_extreme_case(&mirror.states, &mirror.fixed_embeddings, v.extreme_steps, v.extreme_lr, 0.0)?;
        let from = v.extreme_steps / 10;
        let increasing = t.strictly_increasing_from(from);
        let final_norm = *t.norms.last().expect("nonempty");
        let gap = t.objective.last().expect("nonempty") - t.limit;
        let above_limit = t.objective.iter().all(|&f| f >= t.limit);
        let probe = tm.norms[100.min(tm.norms.len() - 1)];
        let sup = tm.norms.iter().copied().fold(0.0, f64::max);
        let bounded = sup < BOUNDEDNESS_FACTOR * probe;
        let pass = increasing && final_norm > EXTREME_NORM_THRESHOLD && gap.abs() <= EXTREME_LIMIT_TOL && above_limit && bounded;
        Ok(VerifyItem::new(
            name,
            pass,
            format!("feasible: final norm {final_norm:.1}, gap to limit {gap:e}; mirrored: sup/step-100 = {:.3}", sup / probe),
            json!({
                "feasible": {
                    "final_norm": final_norm,
                    "strictly_increasing_tail": increasing,
                    "objective_gap": gap,
                    "limit": t.limit,
                    "objective_above_limit": above_limit,
                    "trace": t.downsampled(TRACE_POINTS),
                },
                "mirrored": {
                    "norm_at_step_100": probe,
                    "sup_norm": sup,
                    "bounded": bounded,
                    "trace": tm.downsampled(TRACE_POINTS),
                },
                "steps": v.extreme_steps,
                "learning_rate": v.extreme_lr,
            }),
        ))
    };
    run().unwrap_or_else(|e| VerifyItem::from_error(name, e))
}

/// Random admissible `(α, β, B, ε, dimension)`.
pub fn random_perturbation_case(rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64, usize) {
    let alpha = rng.gen_range(0.5..5.0);
    let beta = rng.gen_range(0.1..3.0);
    let b = rng.gen_range(0.1..2.0);
    let eps = rng.gen_range(0.0..0.95 * alpha / (alpha + beta));
    (alpha, beta, b, eps, rng.gen_range(1..=8))
}

pub fn verify_perturbation(v: &VerifySection) -> VerifyItem {
    let name = "perturbation_bound";
    let p = &v.perturbation_case;
    let mut cases = vec![(p.alpha, p.beta, p.b, p.epsilon, p.dimension, v.seed)];
    let mut rng = item_rng(v.seed, 6, 0);
    for k in 0..v.perturbation_cases {
        let (a, be, b, e, d) = random_perturbation_case(&mut rng);
        cases.push((a, be, b, e, d, v.seed.wrapping_add(k as u64 + 1)));
    }
    let results: Result<Vec<_>, Error> = cases
        .par_iter()
        .map(|&(a, be, b, e, d, s)| verify_perturbation_bound(a, be, b, e, s, d))
        .collect();
    match results {
        Err(e) => VerifyItem::from_error(name, e),
        Ok(r) => {
            let holds = r.iter().filter(|x| x.holds).count();
            let convex = r.iter().filter(|x| x.strong_convexity_holds).count();
            let worked = &r[0];
            VerifyItem::new(
                name,
                holds == r.len() && convex == r.len(),
                format!("bound holds on {holds}/{} configurations; configured case lhs {:e} <= rhs {:.6}", r.len(), worked.lhs, worked.rhs),
                json!({ "configurations": r.len(), "bound_holds": holds, "strong_convexity_holds": convex, "configured_case": worked }),
            )
        }
    }
}

fn constant_bias_params(seed: u64) -> ModelParams {
    let mut p = ModelParams::init(20, 8, true, seed).expect("valid shape");
    p.ln_bias = vec![0.3; 8];
    p
}

pub fn verify_layer_norm(v: &VerifySection, corpus: Option<&EncodedCorpus>) -> VerifyItem {
    let name = "layer_norm";
    let run = || -> Result<VerifyItem, Error> {
        let mut rng = item_rng(v.seed, 7, 0);
        let mut worst_mean: f64 = 0.0;
        let mut worst_var: f64 = 0.0;
        for _ in 0..1000 {
            let d = rng.gen_range(2..=32);
            let h: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let g: Vec<f64> = (0..d)
                .map(|_| {
                    let x: f64 = rng.gen_range(0.2..2.0);
                    if rng.gen_bool(0.5) { x } else { -x }
                })
                .collect();
            let b: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let out = layer_norm(&h, &g, &b)?;
            let z: Vec<f64> = out.iter().zip(&g).zip(&b).map(|((o, gi), bi)| (o - bi) / gi).collect();
            let mean = z.iter().sum::<f64>() / d as f64;
            let var = z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            worst_mean = worst_mean.max(mean.abs());
            worst_var = worst_var.max((var - 1.0).abs());
        }
        let identities = worst_mean <= LAYER_NORM_TOL && worst_var <= LAYER_NORM_TOL;

        let params = constant_bias_params(v.seed);
        let mut data = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..200 {
            let ctx: Vec<usize> = (0..3).map(|_| rng.gen_range(0..20)).collect();
            data.extend(forward_hidden(&params, &ctx)?);
            targets.push(rng.gen_range(0..20));
        }
        let sentences = vec![0; targets.len()];
        let batch = HiddenStateBatch::new(DenseMatrix::new(targets.len(), 8, data)?, targets, sentences)?;
        let constructed = layernorm_origin_check(&params, &batch, v.hull_tolerance, v.hull_max_iters)?;
        let constructed_ok = constructed.identity_holds && constructed.hull_verdict.feasible;

        let mut trained = Value::Null;
        let mut trained_ok = true;
        if let (Some(path), Some(corpus)) = (v.checkpoint.as_ref(), corpus) {
            let ck = load_checkpoint(path).map_err(|e| Error::Domain(e.message))?;
            if ck.params.use_layer_norm {
                let states = collect_hidden_states(&ck.params, corpus, ck.config.context_width, v.hidden_state_cap, v.seed)?;
                let r = layernorm_origin_check(&ck.params, &states, v.hull_tolerance, v.hull_max_iters)?;
                trained_ok = r.identity_holds;
                trained = json!({
                    "checkpoint": path.display().to_string(),
                    "states": states.len(),
                    "centered_sum_max": r.centered_sum_max,
                    "b_over_g_dot_one": r.b_over_g_dot_one,
                    "hull_excludes_origin": r.hull_verdict.feasible,
                    "hull_distance": r.hull_verdict.hull_distance,
                });
            }
        }
        Ok(VerifyItem::new(
            name,
            identities && constructed_ok && trained_ok,
            format!(
                "identity errors mean {worst_mean:e}, variance {worst_var:e}; constant-bias states separable: {}",
                constructed.hull_verdict.feasible
            ),
            json!({
                "random_triples": 1000,
                "worst_mean_error": worst_mean,
                "worst_variance_error": worst_var,
                "constant_bias": {
                    "b_over_g_dot_one": constructed.b_over_g_dot_one,
                    "centered_sum_max": constructed.centered_sum_max,
                    "hull_excludes_origin": constructed.hull_verdict.feasible,
                    "margin": constructed.hull_verdict.margin,
                },
                "trained": trained,
            }),
        ))
    };
    run().unwrap_or_else(|e| VerifyItem::from_error(name, e))
}

/// Runs every enabled item (in parallel, reported in a fixed order).
pub fn run_verify(v: &VerifySection, corpus: Option<&EncodedCorpus>) -> VerifyBundle {
    type Job<'a> = Box<dyn Fn() -> VerifyItem + Send + Sync + 'a>;
    let mut jobs: Vec<Job<'_>> = Vec::new();
    if v.regularizer {
        jobs.push(Box::new(|| verify_regularizer(v)));
    }
    if v.gram {
        jobs.push(Box::new(|| verify_gram(v)));
    }
    if v.negative_direction {
        jobs.push(Box::new(|| verify_negative_direction_2d(v)));
        jobs.push(Box::new(|| verify_negative_direction_highdim(v)));
    }
    if v.extreme_case {
        jobs.push(Box::new(|| verify_extreme_case(v)));
    }
    if v.perturbation {
        jobs.push(Box::new(|| verify_perturbation(v)));
    }
    if v.layer_norm {
        jobs.push(Box::new(move || verify_layer_norm(v, corpus)));
    }
    let items: Vec<VerifyItem> = jobs.par_iter().map(|j| j()).collect();
    let all_pass = items.iter().all(|i| i.status == ItemStatus::Pass);
    VerifyBundle {
        config: v.clone(),
        items,
        all_pass,
    }
}

pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<(CommandOutput, VerifyBundle), CliError> {
    let v = &cfg.verify;
    let corpus = match (&v.checkpoint, &cfg.corpus.path) {
        (Some(ck_path), Some(corpus_path)) if v.layer_norm => {
            let ck = load_checkpoint(ck_path)?;
            let vocab = ck.vocabulary().map_err(|e| CliError::new(super::EXIT_CORRUPT_CHECKPOINT, e.to_string()))?;
            let text = std::fs::read_to_string(corpus_path).map_err(|e| CliError::missing(corpus_path, e))?;
            Some(EncodedCorpus::from_text(&text, &vocab))
        }
        _ => None,
    };
    let bundle = run_verify(v, corpus.as_ref());
    let path = cfg.output_dir.join("verify.json");
    write_json(&path, &bundle)?;
    let cfg_path = echo_config(cfg, "verify")?;
    Ok((
        CommandOutput {
            files: vec![path, cfg_path],
        },
        bundle,
    ))
}
