use std::fmt::Display;

use serde::Serialize;
use serde_json::{Map, Value};

use ledp_core::anticoncentration::{self as anti, DiffMatrix, ReportConfig};
use ledp_core::attack::{
    self, attacker_reconstruct, build_query_graph, graybox_answer_outer, graybox_prepare, outer_product_answer,
    privacy_distance_diagnostic, run_attack, sample_queries, split_outer_product, submatrix_answer, AttackConfig,
    BitDataset, Mechanism, SearchStrategy, SubmatrixQuery,
};
use ledp_core::gadget::{self, BitVector, ScalingConfig};
use ledp_core::graph::{count_triangles_exact, erdos_renyi, Graph};
use ledp_core::ledp::{ExactTriangleCounter, IdentityFamily, TranscriptDump};
use ledp_core::rng::tag;
use ledp_core::rr::{self, GraphFamily, SweepConfig};
use ledp_core::stats::{mean, run_trials, sample_variance, std_error};
use ledp_core::StreamKey;

use crate::args::{AntiArgs, AttackArgs, Command, EstimateArgs, GadgetArgs, ScalingArgs, SelftestArgs, SweepArgs};
use crate::{envelope, merge, read_file, usage, CliError, Outcome, EXIT_FAILURE, EXIT_INFEASIBLE, EXIT_OK};

type Res<T> = Result<T, CliError>;

pub(crate) fn execute(cmd: &Command, file: Map<String, Value>, seed: u64) -> Res<Outcome> {
    let key = StreamKey::new(seed);
    match cmd {
        Command::Estimate(a) => estimate(merge(file, a)?, &key),
        Command::VarianceSweep(a) => variance_sweep(merge(file, a)?, &key),
        Command::Attack(a) => attack_cmd(merge(file, a)?, seed),
        Command::Anticoncentration(a) => anticoncentration(merge(file, a)?, &key),
        Command::Gadget(a) => gadget_cmd(merge(file, a)?, &key),
        Command::SumScaling(a) => sum_scaling(merge(file, a)?, &key),
        Command::Selftest(a) => selftest(merge(file, a)?, &key),
    }
}

fn require<T>(v: Option<T>, field: &str) -> Res<T> {
    v.ok_or_else(|| usage(format!("missing required field `{field}`")))
}

fn csv_row(fields: &[&dyn Display]) -> String {
    let mut line = fields.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct EstimateConfig {
    graph: Option<String>,
    family: Option<String>,
    n: usize,
    eps: f64,
    trials: usize,
    transcript: bool,
}

#[derive(Serialize)]
struct EstimateResult {
    n: usize,
    edges: usize,
    t_exact: u64,
    epsilon: f64,
    trials: usize,
    mean: f64,
    std_error: Option<f64>,
    var_empirical: Option<f64>,
    var_oracle: f64,
    estimates: Vec<f64>,
    transcript: Option<TranscriptDump>,
}

fn estimate(a: EstimateArgs, key: &StreamKey) -> Res<Outcome> {
    let g = match (&a.graph, &a.family) {
        (Some(path), None) => Graph::parse(&read_file(path)?)?,
        (None, Some(family)) => {
            let family: GraphFamily = family.parse()?;
            family.instantiate(require(a.n, "n")?, &key.derive(tag::GRAPH))?
        }
        (Some(_), Some(_)) => return Err(usage("fields `graph` and `family` are mutually exclusive")),
        (None, None) => return Err(usage("one of the fields `graph` or `family` is required")),
    };
    let eps = require(a.eps, "eps")?;
    let trials = a.trials.unwrap_or(1);
    if trials == 0 {
        return Err(usage("field `trials` must be at least 1"));
    }
    let estimates = run_trials(trials, key, |_, k| Ok(rr::estimate_triangles(&g, eps, k)?.t_hat))?;
    let transcript = if a.transcript.unwrap_or(false) {
        let (_, t) = rr::estimate_triangles_with_transcript(&g, eps, &key.derive2(tag::TRIAL, 0))?;
        Some(t.dump())
    } else {
        None
    };
    let config = EstimateConfig {
        graph: a.graph.as_ref().map(|p| p.display().to_string()),
        family: a.family.clone(),
        n: g.n(),
        eps,
        trials,
        transcript: transcript.is_some(),
    };
    let several = trials >= 2;
    let result = EstimateResult {
        n: g.n(),
        edges: g.edge_count(),
        t_exact: count_triangles_exact(&g),
        epsilon: eps,
        trials,
        mean: mean(&estimates),
        std_error: several.then(|| std_error(&estimates)),
        var_empirical: several.then(|| sample_variance(&estimates)),
        var_oracle: rr::exact_variance_oracle(&g, eps)?,
        estimates,
        transcript,
    };
    let mut csv = String::from("trial,t_hat\n");
    for (t, v) in result.estimates.iter().enumerate() {
        csv.push_str(&csv_row(&[&t, v]));
    }
    let summary = format!(
        "estimate: n={} T={} eps={} trials={} mean={:.6} var_oracle={:.6}",
        result.n, result.t_exact, eps, trials, result.mean, result.var_oracle
    );
    Ok(Outcome {
        summary,
        json: envelope("estimate", key.seed(), &config, &result)?,
        csv,
        exit: EXIT_OK,
    })
}

#[derive(Serialize)]
struct SweepEcho {
    ns: Vec<usize>,
    eps: Vec<f64>,
    families: Vec<String>,
    trials: usize,
}

fn variance_sweep(a: SweepArgs, key: &StreamKey) -> Res<Outcome> {
    let families: Vec<GraphFamily> = a
        .families
        .clone()
        .unwrap_or_else(|| ["complete", "cycle", "star", "er:0.5"].map(String::from).to_vec())
        .iter()
        .map(|f| f.parse())
        .collect::<Result<_, _>>()?;
    let cfg = SweepConfig {
        ns: a.ns.unwrap_or_else(|| vec![6, 8]),
        epsilons: a.eps.unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
        families,
        trials: a.trials.unwrap_or(1000),
    };
    let rows = rr::variance_sweep(&cfg, key)?;
    let echo = SweepEcho {
        ns: cfg.ns.clone(),
        eps: cfg.epsilons.clone(),
        families: cfg.families.iter().map(|f| f.to_string()).collect(),
        trials: cfg.trials,
    };
    let worst = rows.iter().map(|r| (r.ratio - 1.0).abs()).fold(0.0, f64::max);
    Ok(Outcome {
        summary: format!("variance-sweep: {} cells, max |ratio - 1| = {worst:.4}", rows.len()),
        json: envelope("variance-sweep", key.seed(), &echo, &rows)?,
        csv: rr::sweep_csv(&rows),
        exit: EXIT_OK,
    })
}

fn attack_cmd(a: AttackArgs, seed: u64) -> Res<Outcome> {
    let cfg = AttackConfig {
        n: require(a.n, "n")?,
        gamma: a.gamma.unwrap_or_else(AttackConfig::default_gamma),
        k: a.k,
        epsilon: a.eps,
        mechanism: a.mechanism.clone().unwrap_or_else(|| "rr".into()),
        budget: a.budget,
        exhaustive: a.exhaustive,
        seed,
    };
    if cfg.n == 0 {
        return Err(usage("field `n` must be positive"));
    }
    let mechanism = cfg.mechanism()?;
    match a.trials {
        Some(trials) => {
            let report = privacy_distance_diagnostic(
                mechanism,
                cfg.n,
                cfg.gamma,
                cfg.query_count(),
                trials,
                cfg.strategy(),
                &StreamKey::new(seed),
            )?;
            let mut csv = String::from("trial,hamming\n");
            for (t, h) in report.hammings.iter().enumerate() {
                csv.push_str(&csv_row(&[&t, h]));
            }
            let summary = format!(
                "attack: mechanism={} n={} k={} trials={} mean_hamming={:.4} se={:.4} bound={}",
                mechanism.name(),
                cfg.n,
                report.k,
                trials,
                report.mean_hamming,
                report.std_error,
                report.lower_bound.map_or("none".into(), |b| format!("{b:.4}"))
            );
            Ok(Outcome {
                summary,
                json: envelope("attack", seed, &cfg, &report)?,
                csv,
                exit: EXIT_OK,
            })
        }
        None => {
            let report = run_attack(&cfg)?;
            let mut csv = String::from("n,k,gamma,mechanism,feasible,inaccurate_count,disagreement_budget,hamming\n");
            csv.push_str(&csv_row(&[
                &report.n,
                &report.k,
                &report.gamma,
                &mechanism.name(),
                &report.feasible,
                &report.inaccurate_count,
                &report.thresholds.disagreement_budget,
                &opt(report.hamming),
            ]));
            let summary = format!(
                "attack: mechanism={} n={} k={} feasible={} inaccurate={} budget={} hamming={}",
                mechanism.name(),
                report.n,
                report.k,
                report.feasible,
                report.inaccurate_count,
                report.thresholds.disagreement_budget,
                opt(report.hamming)
            );
            Ok(Outcome {
                summary,
                json: envelope("attack", seed, &cfg, &report)?,
                csv,
                exit: if report.feasible { EXIT_OK } else { EXIT_INFEASIBLE },
            })
        }
    }
}

#[derive(Serialize)]
struct AntiResult {
    rows: Vec<anti::ReportRow>,
    exact_rows_meet_bound: bool,
}

fn anticoncentration(a: AntiArgs, key: &StreamKey) -> Res<Outcome> {
    let cfg = ReportConfig {
        ns: a.ns.unwrap_or_else(|| (2..=6).collect()),
        gammas: a.gammas.unwrap_or_else(|| vec![1.0 / 9.0, 0.25, 1.0]),
        instances: a.instances.unwrap_or(10),
        mc_samples: a.mc_samples.unwrap_or(10_000),
    };
    let rows = anti::anticoncentration_report(&cfg, key)?;
    let ok = rows.iter().filter(|r| r.exact).all(|r| r.tail >= r.lemma_bound);
    let summary = format!("anticoncentration: {} instances, exact rows meet bound: {ok}", rows.len());
    let csv = anti::report_csv(&rows);
    let result = AntiResult {
        rows,
        exact_rows_meet_bound: ok,
    };
    Ok(Outcome {
        summary,
        json: envelope("anticoncentration", key.seed(), &cfg, &result)?,
        csv,
        exit: if ok { EXIT_OK } else { EXIT_FAILURE },
    })
}

#[derive(Serialize)]
struct GadgetEcho {
    bits: String,
    exact: bool,
    eps: Option<f64>,
    trials: Option<usize>,
}

#[derive(Serialize)]
struct Routes {
    epsilon: f64,
    trials: usize,
    mean_baseline: f64,
    mean_via_triangles: f64,
    mean_abs_error_baseline: f64,
    mean_abs_error_via_triangles: f64,
}

#[derive(Serialize)]
struct GadgetResult {
    n: usize,
    s: u64,
    t: Option<u64>,
    routes: Option<Routes>,
}

fn gadget_cmd(a: GadgetArgs, key: &StreamKey) -> Res<Outcome> {
    let x = match (&a.bits, a.n) {
        (Some(b), None) => BitVector::parse(b)?,
        (None, Some(n)) => BitVector::random(n, &key.derive(tag::DATASET)),
        (Some(_), Some(_)) => return Err(usage("fields `bits` and `n` are mutually exclusive")),
        (None, None) => return Err(usage("one of the fields `bits` or `n` is required")),
    };
    if x.n() == 0 {
        return Err(usage("field `bits` must be non-empty"));
    }
    let exact = a.exact.unwrap_or(a.eps.is_none());
    let t = if exact { Some(gadget::gadget_exact(&x)?.t) } else { None };
    let routes = match a.eps {
        Some(eps) => {
            let trials = a.trials.unwrap_or(1000);
            if trials == 0 {
                return Err(usage("field `trials` must be at least 1"));
            }
            let s = x.sum() as f64;
            let base = run_trials(trials, &key.derive(tag::RANDOMIZER), |_, k| gadget::ldp_sum_baseline(&x, eps, k))?;
            let via = run_trials(trials, &key.derive(tag::GRAPH), |_, k| {
                gadget::end_to_end_sum_via_triangles(&x, eps, k)
            })?;
            let abs = |v: &[f64]| mean(&v.iter().map(|e| (e - s).abs()).collect::<Vec<_>>());
            Some(Routes {
                epsilon: eps,
                trials,
                mean_baseline: mean(&base),
                mean_via_triangles: mean(&via),
                mean_abs_error_baseline: abs(&base),
                mean_abs_error_via_triangles: abs(&via),
            })
        }
        None => None,
    };
    let bits: String = x.bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
    let echo = GadgetEcho {
        bits,
        exact,
        eps: a.eps,
        trials: routes.as_ref().map(|r| r.trials),
    };
    let result = GadgetResult {
        n: x.n(),
        s: x.sum(),
        t,
        routes,
    };
    let mut csv = String::from("n,s,t,epsilon,trials,mean_baseline,mean_via_triangles\n");
    let r = result.routes.as_ref();
    csv.push_str(&csv_row(&[
        &result.n,
        &result.s,
        &opt(result.t),
        &opt(r.map(|r| r.epsilon)),
        &opt(r.map(|r| r.trials)),
        &opt(r.map(|r| r.mean_baseline)),
        &opt(r.map(|r| r.mean_via_triangles)),
    ]));
    let mut summary = format!("gadget: n={} S={}", result.n, result.s);
    if let Some(t) = result.t {
        summary.push_str(&format!(" T={t}"));
    }
    if let Some(r) = r {
        summary.push_str(&format!(
            " eps={} baseline_mean={:.4} triangle_mean={:.4}",
            r.epsilon, r.mean_baseline, r.mean_via_triangles
        ));
    }
    Ok(Outcome {
        summary,
        json: envelope("gadget", key.seed(), &echo, &result)?,
        csv,
        exit: EXIT_OK,
    })
}

fn sum_scaling(a: ScalingArgs, key: &StreamKey) -> Res<Outcome> {
    let cfg = ScalingConfig {
        ns: a.ns.unwrap_or_else(|| vec![64, 256, 1024, 4096]),
        epsilon: a.eps.unwrap_or(1.0),
        trials: a.trials.unwrap_or(10_000),
        triangle_trials: a.triangle_trials.unwrap_or(0),
        triangle_max_n: a.triangle_max_n.unwrap_or(32),
    };
    let rows = gadget::sum_scaling(&cfg, key)?;
    let slope = rows.first().map_or(f64::NAN, |r| r.fitted_exponent);
    Ok(Outcome {
        summary: format!("sum-scaling: {} sizes, fitted exponent {slope:.4}", rows.len()),
        json: envelope("sum-scaling", key.seed(), &cfg, &rows)?,
        csv: gadget::scaling_csv(&rows),
        exit: EXIT_OK,
    })
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct SelftestEcho {
    trials: usize,
}

fn check(name: &'static str, f: impl FnOnce() -> ledp_core::Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn selftest(a: SelftestArgs, key: &StreamKey) -> Res<Outcome> {
    let trials = a.trials.unwrap_or(20_000);
    if trials < 100 {
        return Err(usage("field `trials` must be at least 100"));
    }
    let checks = vec![
        check("query-graph-identity", || {
            let mut bad = 0;
            for t in 0..200u64 {
                let k = key.derive2(1, t);
                let n = 2 + (t % 5) as usize;
                let x = BitDataset::random(n, &k.derive(0));
                let q = SubmatrixQuery::new(
                    BitVector::random(n, &k.derive(1)).bits().to_vec(),
                    BitVector::random(n, &k.derive(2)).bits().to_vec(),
                )?;
                let g = build_query_graph(&x, &q)?;
                bad += usize::from(count_triangles_exact(&g) as i64 != n as i64 * submatrix_answer(&x, &q)?);
            }
            Ok((bad == 0, format!("{bad} of 200 mismatched")))
        }),
        check("outer-product-split", || {
            let mut bad = 0;
            for t in 0..500u64 {
                let k = key.derive2(2, t);
                let n = 1 + (t % 10) as usize;
                let x = BitDataset::random(n, &k.derive(0));
                let q = &sample_queries(n, 1, &k.derive(1))?[0];
                let split = split_outer_product(q);
                let parts = [0, 1, 2].map(|i| submatrix_answer(&x, &split.parts[i]));
                let parts = [parts[0].clone()?, parts[1].clone()?, parts[2].clone()?];
                bad += usize::from(split.combine_exact(parts) != outer_product_answer(&x, q)?);
            }
            Ok((bad == 0, format!("{bad} of 500 mismatched")))
        }),
        check("gadget-identity", || {
            let mut bad = 0;
            let mut total = 0;
            for n in 1..=6usize {
                for mask in 0u32..1 << n {
                    let x = BitVector::new((0..n).map(|i| mask >> i & 1 == 1).collect());
                    bad += usize::from(gadget::gadget_exact(&x).is_err());
                    total += 1;
                }
            }
            Ok((bad == 0, format!("{bad} of {total} mismatched")))
        }),
        check("variance-oracle-vs-enumeration", || {
            let mut worst = 0.0f64;
            for t in 0..10u64 {
                let n = 5 + (t % 2) as usize;
                let g = erdos_renyi(n, 0.6, &key.derive2(3, t))?;
                let eps = 0.5 + t as f64 * 0.2;
                let v = rr::exact_variance_oracle(&g, eps)?;
                let e = rr::enumerate_moments(&g, eps)?.variance;
                worst = worst.max((v - e).abs() / e.abs().max(1e-300));
            }
            Ok((worst < 1e-9, format!("max relative gap {worst:e}")))
        }),
        check("anticoncentration-moments", || {
            let mut bad = 0;
            for (gi, &(num, den)) in [(1u64, 9u64), (1, 4), (1, 1)].iter().enumerate() {
                for t in 0..20u64 {
                    let n = 1 + (t % 5) as usize;
                    let m = DiffMatrix::random_dense(n, num as f64 / den as f64, &key.derive2(4, gi as u64 * 100 + t))?;
                    let mom = anti::moments_exhaustive(&m)?;
                    let ok = mom.sum1 == 0
                        && mom.second_equals(m.m())
                        && mom.fourth_within(n)
                        && anti::lemma_check(&m, num, den)?.holds;
                    bad += usize::from(!ok);
                }
            }
            Ok((bad == 0, format!("{bad} of 60 instances failed")))
        }),
        check("graybox-two-invocations", || {
            let n = 4;
            let x = BitDataset::random(n, &key.derive(5));
            let fam = IdentityFamily::default();
            let state = graybox_prepare(&x, &fam, &key.derive(6))?;
            let qs = sample_queries(n, 50, &key.derive(7))?;
            let mut bad = 0;
            for (l, q) in qs.iter().enumerate() {
                let v = graybox_answer_outer(&state, q, &fam, &ExactTriangleCounter, &key.derive2(8, l as u64))?;
                bad += usize::from(v != outer_product_answer(&x, q)? as f64);
            }
            let calls = state.transcript().invocation_count();
            Ok((bad == 0 && calls == 4 * n, format!("{bad} wrong answers, {calls} invocations")))
        }),
        check("estimator-unbiased", || {
            let g = ledp_core::graph::complete(4);
            let v = run_trials(trials, &key.derive(9), |_, k| Ok(rr::estimate_triangles(&g, 1.0, k)?.t_hat))?;
            let sd = (rr::exact_variance_oracle(&g, 1.0)? / trials as f64).sqrt();
            let gap = (mean(&v) - 4.0).abs();
            Ok((gap < 4.0 * sd, format!("|mean - T| = {gap:.4}, 4 sd = {:.4}", 4.0 * sd)))
        }),
        check("exhaustive-reconstruction", || {
            let mut exact = 0;
            for t in 0..5u64 {
                let k = key.derive2(10, t);
                let x = BitDataset::random(3, &k.derive(tag::DATASET));
                let qs = sample_queries(3, 2000, &k.derive(tag::QUERIES))?;
                let answers = attack::answer_queries(&x, &qs, Mechanism::Oracle, &k)?.answers;
                let r = attacker_reconstruct(&answers, &qs, 3, 1.0 / 9.0, SearchStrategy::Exhaustive, Some(&x), &k)?;
                exact += usize::from(r.hamming == Some(0));
            }
            Ok((exact == 5, format!("{exact} of 5 recovered exactly")))
        }),
    ];
    let passed = checks.iter().all(|c| c.passed);
    let mut csv = String::from("check,passed,detail\n");
    for c in &checks {
        csv.push_str(&csv_row(&[&c.name, &c.passed, &format!("\"{}\"", c.detail.replace('"', "'"))]));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let summary = if passed {
        format!("selftest: all {} checks passed", checks.len())
    } else {
        format!("selftest: failed {}", failed.join(", "))
    };
    #[derive(Serialize)]
    struct SelftestResult {
        passed: bool,
        checks: Vec<Check>,
    }
    Ok(Outcome {
        summary,
        json: envelope("selftest", key.seed(), &SelftestEcho { trials }, &SelftestResult { passed, checks })?,
        csv,
        exit: if passed { EXIT_OK } else { EXIT_FAILURE },
    })
}
