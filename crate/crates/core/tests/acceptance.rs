//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion that ran failed.
//!
//! Criteria 7-11 need full 150k-step training runs (about three hours each on
//! one core) and are skipped unless `--ignored` or `--include-ignored` is
//! passed. Their runs are cached under `$MMREACH_ACCEPTANCE_RUNS` (default: the
//! cargo target tmp dir) and reused when the stored config matches.
//! Positional arguments select criteria by number.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mmreach::action::{command_for, respects_mask, SelectionMask, ACTION_COUNT};
use mmreach::demos::{arm_starts_when_reachable, generate_demos, DemoConfig};
use mmreach::kinematics::{brute_force_reachable, ik_reachable, IkQuery};
use mmreach::numerics::dist::{kl_tape, straight_through_sample};
use mmreach::numerics::{grad, kl_gaussian, Activation, CategoricalLogits, DiagonalGaussian, Mlp, ParamVector, SetId, Tape, Tensor, Var};
use mmreach::policy::{imitation_tape, lambda_returns, Hierarchy, ManagerReward};
use mmreach::reachability::{evaluate, reachability_reward, rollout_fixed_arm, PredictedRollout, ReachabilityConfig};
use mmreach::rng::{self, Stream};
use mmreach::sim2d::{base_collides, check_collision, render_observation, EnvId, EnvLayout, Pose, WorldState};
use mmreach::trainer::metrics::{read_eval_log, read_metrics, EvalEpisode, EvalSummary};
use mmreach::trainer::{RunConfig, RunSummary, Trainer};
use mmreach::worldmodel::{LatentState, SequenceBatch, WorldModel, WorldModelConfig};

type Outcome = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    heavy: bool,
    budget: Option<Duration>,
    check: fn() -> Outcome,
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let heavy = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let only: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion { id: 1, name: "selector reward table", heavy: false, budget: secs(1), check: table_exactness },
        Criterion { id: 2, name: "reachability rule boundaries", heavy: false, budget: secs(1), check: rule_boundaries },
        Criterion { id: 3, name: "numerics soundness", heavy: false, budget: secs(30), check: numerics_soundness },
        Criterion { id: 4, name: "IK vs brute force", heavy: false, budget: secs(120), check: oracle_agreement },
        Criterion { id: 5, name: "demonstrations", heavy: false, budget: secs(120), check: demonstrations },
        Criterion { id: 6, name: "mask safety", heavy: false, budget: None, check: mask_safety },
        Criterion { id: 7, name: "empty-env learning", heavy: true, budget: None, check: desk_scale_learning },
        Criterion { id: 8, name: "embodiment-selection quality", heavy: true, budget: None, check: selection_quality },
        Criterion { id: 9, name: "reachability vs IK oracle", heavy: true, budget: None, check: oracle_correlation },
        Criterion { id: 10, name: "ablation direction", heavy: true, budget: None, check: ablation_direction },
        Criterion { id: 11, name: "obstacle environments", heavy: true, budget: None, check: obstacle_envs },
        Criterion { id: 12, name: "determinism", heavy: false, budget: None, check: determinism },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        if c.heavy && !heavy {
            println!("criterion {:>2} SKIP {}: needs full training runs; pass --ignored", c.id, c.name);
            continue;
        }
        let t0 = Instant::now();
        let outcome = (c.check)();
        let took = t0.elapsed();
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => match c.budget {
                Some(b) if took > b => (false, format!("{detail}; over the {:?} budget", b)),
                _ => (pass, detail),
            },
            Err(e) => (false, format!("error: {e}")),
        };
        println!("criterion {:>2} {} {}: {detail} ({:.1}s)", c.id, if pass { "PASS" } else { "FAIL" }, c.name, took.as_secs_f64());
        if !pass {
            failed += 1;
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn table_exactness() -> Outcome {
    let cfg = ReachabilityConfig::default();
    let cells = [(SelectionMask::BASE, true, 0.0), (SelectionMask::BASE, false, 0.0), (SelectionMask::ARM, true, 2.0), (SelectionMask::ARM, false, -1.0)];
    let bad: Vec<String> = cells
        .iter()
        .filter(|(m, r, want)| reachability_reward(*m, *r, &cfg) != *want)
        .map(|(m, r, want)| format!("({:?},{r}) -> {} not {want}", m.embodiment(), reachability_reward(*m, *r, &cfg)))
        .collect();
    Ok((bad.is_empty(), if bad.is_empty() { "4/4 cells exact".into() } else { bad.join(", ") }))
}

fn dummy_rollout(rewards: Vec<f64>, collisions: Vec<f64>) -> PredictedRollout {
    let s = LatentState { h: vec![0.0], z: vec![0.0], dist: DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap() };
    let n = rewards.len();
    PredictedRollout { states: vec![s; n], rewards, collisions, actions: vec![4; n - 1] }
}

fn rule_boundaries() -> Outcome {
    let cfg = ReachabilityConfig::default();
    let n = cfg.horizon + 1;
    let rs = [0.69, 0.7, 0.71];
    let cs = [0.29, 0.3, 0.31];
    let (mut cases, mut wrong) = (0, 0);
    for &r in &rs {
        for &c in &cs {
            for i in 0..n {
                for j in 0..n {
                    // One boundary reward among zeros; one boundary collision among zeros.
                    let mut rew = vec![0.0; n];
                    rew[i] = r;
                    let mut col = vec![0.0; n];
                    col[j] = c;
                    let want = r == 0.71 && c == 0.29;
                    cases += 1;
                    wrong += usize::from(evaluate(&dummy_rollout(rew, col), &cfg) != want);
                    // Saturated backgrounds: every step at the boundary values.
                    let mut rew = vec![r; n];
                    rew[i] = 0.0;
                    let mut col = vec![c; n];
                    col[j] = 0.0;
                    let want = r == 0.71 && c == 0.29;
                    cases += 1;
                    wrong += usize::from(evaluate(&dummy_rollout(rew, col), &cfg) != want);
                }
            }
        }
    }
    let exact = [(0.7, false), (0.7 + f64::EPSILON, true)];
    for (v, want) in exact {
        cases += 1;
        wrong += usize::from(evaluate(&dummy_rollout(vec![v; n], vec![0.0; n]), &cfg) != want);
    }
    for (v, want) in [(0.3, false), (0.3 - f64::EPSILON, true)] {
        cases += 1;
        wrong += usize::from(evaluate(&dummy_rollout(vec![0.9; n], vec![v; n]), &cfg) != want);
    }
    Ok((wrong == 0, format!("{}/{cases} rollouts classified as expected (H={})", cases - wrong, cfg.horizon)))
}

/// Share of coordinates where the analytic gradient matches central
/// differences (step 1e-4) to relative error 1e-3.
fn gradient_agreement(params: &ParamVector, coords: &[usize], loss: impl Fn(&ParamVector) -> (f64, Vec<f64>)) -> f64 {
    let (_, analytic) = loss(params);
    let mut p = params.clone();
    let h = 1e-4;
    let mut ok = 0;
    for &i in coords {
        let orig = p.values()[i];
        p.values_mut()[i] = orig + h;
        let up = loss(&p).0;
        p.values_mut()[i] = orig - h;
        let down = loss(&p).0;
        p.values_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let diff = (analytic[i] - numeric).abs();
        if diff < 1e-9 || diff / analytic[i].abs().max(numeric.abs()) < 1e-3 {
            ok += 1;
        }
    }
    ok as f64 / coords.len() as f64
}

fn random_tensor(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn numerics_soundness() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // Regression MLP.
    let mut p = ParamVector::new();
    let net = Mlp::new(&mut p, "mse", &[6, 16, 16, 3], Activation::Elu, Activation::Identity, 1.0, &mut rng);
    let (x, y) = (random_tensor(7, 6, &mut rng), random_tensor(7, 3, &mut rng));
    let all: Vec<usize> = (0..p.len()).collect();
    let mse = gradient_agreement(&p, &all, |ps| {
        grad(ps, |t, s| {
            let xi = t.constant(x.clone());
            let yi = t.constant(y.clone());
            let out = net.forward_tape(t, s, xi);
            let d = t.sub(out, yi);
            let sq = t.square(d);
            t.mean(sq)
        })
        .unwrap()
    });
    notes.push(format!("mlp {:.3}", mse));
    pass &= mse >= 0.95;

    // Grouped categorical head with cross-entropy, as in the policy levels.
    let mut p = ParamVector::new();
    let head = Mlp::new(&mut p, "pi", &[5, 12, 8], Activation::Elu, Activation::Identity, 1.0, &mut rng);
    let x = random_tensor(6, 5, &mut rng);
    let labels: Vec<Vec<usize>> = (0..6).map(|_| vec![rng.gen_range(0..4), rng.gen_range(0..4)]).collect();
    let all: Vec<usize> = (0..p.len()).collect();
    let ce = gradient_agreement(&p, &all, |ps| {
        grad(ps, |t, s| {
            let xi = t.constant(x.clone());
            let logits = head.forward_tape(t, s, xi);
            imitation_tape(t, logits, &labels, 4)
        })
        .unwrap()
    });
    notes.push(format!("categorical {:.3}", ce));
    pass &= ce >= 0.95;

    // Gaussian KL with learned parameters on both sides.
    let mut p = ParamVector::new();
    let enc = Mlp::new(&mut p, "kl", &[4, 8, 12], Activation::Tanh, Activation::Identity, 1.0, &mut rng);
    let x = random_tensor(5, 4, &mut rng);
    let all: Vec<usize> = (0..p.len()).collect();
    let kl = gradient_agreement(&p, &all, |ps| {
        grad(ps, |t: &mut Tape<'_>, s: SetId| {
            let xi = t.constant(x.clone());
            let out = enc.forward_tape(t, s, xi);
            let part = |t: &mut Tape<'_>, k: usize| -> Var { t.slice(out, 3 * k, 3) };
            let (mq, rq, mp, rp) = (part(t, 0), part(t, 1), part(t, 2), part(t, 3));
            let sq = t.softplus(rq);
            let sq = t.offset(sq, 0.1);
            let sp = t.softplus(rp);
            let sp = t.offset(sp, 0.1);
            let k = kl_tape(t, mq, sq, mp, sp);
            t.mean(k)
        })
        .unwrap()
    });
    notes.push(format!("kl {:.3}", kl));
    pass &= kl >= 0.95;

    // Full world-model objective on a random subset of coordinates.
    let cfg = WorldModelConfig { deter: 8, stoch: 4, hidden: 12, embed: 12, seq_len: 6, batch: 2, codec_hidden: 8, ..Default::default() };
    let wm = WorldModel::new(cfg, &mut rng::stream(1, Stream::Init));
    let demos = generate_demos(&EnvLayout::builtin(EnvId::Empty), 0, 2, &DemoConfig::default()).map_err(err)?;
    let batch = SequenceBatch::from_slices(&[(&demos[0], 0), (&demos[1], 10)], 6).map_err(err)?;
    let coords = rand::seq::index::sample(&mut rng, wm.params.len(), 400).into_vec();
    let w = gradient_agreement(&wm.params, &coords, |ps| wm.loss_gradient(ps, &batch, &mut rng::stream(2, Stream::Latent)).unwrap());
    notes.push(format!("world model {:.3}", w));
    pass &= w >= 0.95;

    // Closed-form KL cases.
    let g = |m: f64, s: f64| DiagonalGaussian::new(vec![m], vec![s]).unwrap();
    let oracle = 0.5 * (4.0 - 1.0 - 4f64.ln());
    let kls = [
        (kl_gaussian(&g(0.4, 0.7), &g(0.4, 0.7)).map_err(err)?, 0.0),
        (kl_gaussian(&g(1.0, 1.0), &g(0.0, 1.0)).map_err(err)?, 0.5),
        (kl_gaussian(&g(0.0, 2.0), &g(0.0, 1.0)).map_err(err)?, oracle),
    ];
    let kl_ok = kls.iter().all(|(got, want)| (got - want).abs() < 1e-6) && (oracle - 0.8069).abs() < 1e-4;
    notes.push(format!("kl cases {:?}", kls.iter().map(|k| format!("{:.6}", k.0)).collect::<Vec<_>>()));
    pass &= kl_ok;

    let v = lambda_returns(&[1.0, 0.0], &[0.5, 0.4, 0.3], 0.99, 0.95);
    notes.push(format!("lambda-return {:.6}", v[0]));
    pass &= (v[0] - 1.29913).abs() < 1e-5;

    // Straight-through sampling frequencies.
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for probs in [vec![0.25; 4], vec![0.1, 0.2, 0.3, 0.4]] {
        let logits = CategoricalLogits::new(probs.iter().map(|p: &f64| p.ln()).collect()).map_err(err)?;
        let mut counts = vec![0usize; probs.len()];
        let mut srng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..n {
            let s = straight_through_sample(&logits, 1.0, &mut srng).map_err(err)?;
            counts[s.index] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            worst = worst.max((*c as f64 / n as f64 - p).abs());
        }
    }
    notes.push(format!("sample freq max dev {:.4}", worst));
    pass &= worst <= 0.01;
    Ok((pass, notes.join(", ")))
}

/// Base pose within `radius` of the layout goal, clear of obstacles and in bounds.
fn base_near_goal(layout: &EnvLayout, radius: f64, rng: &mut impl Rng) -> Pose {
    loop {
        let d = radius * rng.gen::<f64>().sqrt();
        let a = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (x, y) = (layout.goal[0] + d * a.cos(), layout.goal[1] + d * a.sin());
        let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        if layout.bounds.contains([x, y]) && !base_collides([x, y], &layout.obstacles) {
            return Pose::new(x, y, yaw);
        }
    }
}

fn oracle_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let layouts: Vec<EnvLayout> = EnvId::ALL.into_iter().map(EnvLayout::builtin).collect();
    let n = 1000;
    let (mut agree, mut reachable) = (0, 0);
    for k in 0..n {
        let layout = &layouts[k % layouts.len()];
        let q = IkQuery::new(base_near_goal(layout, 1.1, &mut rng), layout.goal, layout.obstacles.clone());
        let fast = ik_reachable(&q);
        let brute = brute_force_reachable(&q, 1.0);
        agree += usize::from(fast == brute);
        reachable += usize::from(brute);
    }
    let rate = agree as f64 / n as f64;
    Ok((rate >= 0.99, format!("{agree}/{n} agree ({rate:.3}); {reachable} reachable by brute force")))
}

fn demonstrations() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for env in EnvId::ALL {
        let layout = EnvLayout::builtin(env);
        let demos = generate_demos(&layout, 0, 50, &DemoConfig::default()).map_err(err)?;
        let ok = demos.iter().filter(|d| d.success).count();
        let collisions: usize = demos.iter().map(|d| d.collisions.iter().filter(|&&c| c == 1).count()).sum();
        let early_arm = demos.iter().filter(|d| !arm_starts_when_reachable(d, &layout)).count();
        pass &= demos.len() == 50 && ok == 50 && collisions == 0 && early_arm == 0;
        notes.push(format!("{env}: {ok}/{} success, {collisions} collisions, {early_arm} early-arm", demos.len()));
    }
    Ok((pass, notes.join("; ")))
}

/// Small but complete configuration: every stage of a run at reduced size.
fn smoke_config() -> RunConfig {
    let mut c = RunConfig {
        demos: 5,
        pretrain_steps: 20,
        pretrain_imitation_steps: 5,
        env_steps: 480,
        train_episode_len: 60,
        eval_step_cap: 60,
        rl_iterations_per_cycle: 2,
        eval_every_cycles: 2,
        eval_episodes: 2,
        final_eval_episodes: 4,
        ..Default::default()
    };
    c.world_model = WorldModelConfig { deter: 32, stoch: 8, hidden: 48, embed: 48, seq_len: 16, batch: 4, codec_hidden: 32, ..Default::default() };
    c.agent.hidden = 48;
    c.agent.imagination_starts = 16;
    c.agent.imitation_rows = 16;
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn mask_safety() -> Outcome {
    let mut checked = 0usize;
    let mut bad = 0usize;
    let mut notes = Vec::new();
    for (label, modified) in [("full", false), ("modified", true)] {
        let mut cfg = smoke_config();
        cfg.agent.modified = modified;
        let demos = cfg.load_or_generate_demos().map_err(err)?;
        let mut t = Trainer::new(cfg, demos).map_err(err)?;
        let out = scratch(&format!("mask_{label}"));
        // Any violation inside the run is a hard error and surfaces here.
        let summary = t.run(&out).map_err(err)?;
        for ep in t.buffer.iter() {
            for (a, m) in ep.actions.iter().zip(&ep.masks) {
                checked += 1;
                bad += usize::from(!respects_mask(&command_for(*a), *m) || !m.embodiment().owns(*a));
            }
        }
        let log = read_eval_log(BufReader::new(File::open(out.join("final_eval_log.jsonl")).map_err(err)?)).map_err(err)?;
        for s in &log {
            checked += 1;
            bad += usize::from(!respects_mask(&command_for(s.action), SelectionMask::new(s.mask)) || !s.mask.owns(s.action));
        }
        notes.push(format!("{label}: {} iterations, {} aborted", summary.iterations, summary.aborted_iterations));
        bad += summary.aborted_iterations as usize;
    }
    Ok((bad == 0 && checked > 0, format!("{checked} commands checked, {bad} problems; {}", notes.join("; "))))
}

fn determinism() -> Outcome {
    let cfg = smoke_config();
    let mut files = Vec::new();
    for k in 0..2 {
        let out = scratch(&format!("determinism_{k}"));
        mmreach::trainer::run(cfg.clone(), &out).map_err(err)?;
        files.push(std::fs::read(out.join("metrics.csv")).map_err(err)?);
    }
    let rows = read_metrics(files[0].as_slice()).map_err(err)?.len();
    Ok((files[0] == files[1] && rows > 0, format!("{rows} rows, {} bytes, identical: {}", files[0].len(), files[0] == files[1])))
}

// ---- Full-scale criteria ----

fn runs_root() -> PathBuf {
    std::env::var_os("MMREACH_ACCEPTANCE_RUNS").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-runs"))
}

fn full_config(env: EnvId, seed: u64) -> RunConfig {
    RunConfig { env, seed, ..Default::default() }
}

/// Runs `cfg` into `runs_root()/name` unless a finished run with the same config is there.
fn cached_run(name: &str, cfg: &RunConfig) -> Result<(RunSummary, PathBuf), String> {
    let dir = runs_root().join(name);
    let done = std::fs::read_to_string(dir.join("config.json")).ok().is_some_and(|c| c == cfg.to_json()) && dir.join("summary.json").exists();
    if !done {
        eprintln!("training {name} into {}", dir.display());
        mmreach::trainer::run(cfg.clone(), &dir).map_err(err)?;
    }
    let summary: RunSummary = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).map_err(err)?).map_err(err)?;
    Ok((summary, dir))
}

fn full_empty(seed: u64) -> Result<(RunSummary, PathBuf), String> {
    cached_run(&format!("empty_full_seed{seed}"), &full_config(EnvId::Empty, seed))
}

fn desk_scale_learning() -> Outcome {
    let mut rates = Vec::new();
    for seed in 0..3 {
        rates.push(full_empty(seed)?.0.final_eval.success_rate);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    Ok((mean >= 0.8, format!("success per seed {rates:.2?}, mean {mean:.3} (need >= 0.8)")))
}

fn restore(dir: &Path, cfg: RunConfig) -> Result<Trainer, String> {
    Trainer::from_checkpoint(cfg, &dir.join("checkpoint")).map_err(err)
}

fn selection_quality() -> Outcome {
    let (_, dir) = full_empty(0)?;
    let mut t = restore(&dir, full_config(EnvId::Empty, 0))?;
    let mut successes: Vec<EvalEpisode> = Vec::new();
    let mut total = 0;
    while successes.len() < 100 && total < 1000 {
        for e in t.evaluate(50).map_err(err)? {
            total += 1;
            if e.success {
                successes.push(e);
            }
        }
    }
    let s = EvalSummary::of(&successes);
    let (near, first) = (s.arm_near_goal.unwrap_or(0.0), s.first_arm_ratio.unwrap_or(0.0));
    let pass = successes.len() >= 100 && near >= 0.9 && first >= 0.6;
    Ok((pass, format!("{} successful of {total}; arm-near-goal {near:.3} (>= 0.9), first-arm ratio {first:.3} (>= 0.6)", successes.len())))
}

fn oracle_correlation() -> Outcome {
    let (_, dir) = full_empty(0)?;
    let t = restore(&dir, full_config(EnvId::Empty, 0))?;
    let layout = EnvLayout::builtin(EnvId::Empty);
    let reach = t.agent.config.reach;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut prng, mut lrng) = (rng::stream(23, Stream::Policy), rng::stream(23, Stream::Latent));
    let zero = Tensor::zeros(1, ACTION_COUNT);
    let n = 240;
    let (mut agree, mut positives) = (0, 0);
    for _ in 0..n {
        let state = WorldState {
            base: base_near_goal(&layout, 1.6, &mut rng),
            joints: layout.initial_joints,
            goal: layout.goal,
            obstacles: layout.obstacles.clone(),
            bounds: layout.bounds,
            step_count: 0,
        };
        if check_collision(&state) != 0 {
            continue;
        }
        let obs = Tensor::row_vector(render_observation(&state).features());
        let latent = t.wm.observe_mean(&t.wm.initial(1), &zero, &obs).map_err(err)?;
        let roll = rollout_fixed_arm(&t.wm, &t.agent, &latent.state(0), &reach, 0.0, &mut prng, &mut lrng).map_err(err)?;
        let truth = ik_reachable(&IkQuery::new(state.base, layout.goal, layout.obstacles.clone()));
        agree += usize::from(evaluate(&roll, &reach) == truth);
        positives += usize::from(truth);
    }
    let rate = agree as f64 / n as f64;
    Ok((rate >= 0.8, format!("{agree}/{n} agree ({rate:.3}, need >= 0.8); {positives} IK-reachable")))
}

fn ablation_direction() -> Outcome {
    let full = full_empty(0)?.0.final_eval.success_rate;
    let mut c = full_config(EnvId::Empty, 0);
    c.agent.manager_reward = ManagerReward::Exploration;
    let explore = cached_run("empty_exploration_seed0", &c)?.0.final_eval.success_rate;
    let mut c = full_config(EnvId::Empty, 0);
    c.agent.hierarchy = Hierarchy::Flat;
    let flat = cached_run("empty_flat_seed0", &c)?.0.final_eval.success_rate;
    let pass = full - explore >= 0.3 && full - flat >= 0.2;
    Ok((pass, format!("progress {full:.2} vs exploration {explore:.2} (gap >= 0.3); hierarchy {full:.2} vs flat {flat:.2} (gap >= 0.2)")))
}

fn obstacle_envs() -> Outcome {
    let (base, _) = cached_run("obstacle_base_seed0", &full_config(EnvId::ObstacleBase, 0))?;
    let (arm, _) = cached_run("obstacle_arm_seed0", &full_config(EnvId::ObstacleArm, 0))?;
    let (sb, sa, frac) = (base.final_eval.success_rate, arm.final_eval.success_rate, arm.sector_fraction);
    let pass = sb >= 0.6 && sa >= 0.6 && frac < 0.2 && arm.arm_selections > 0;
    Ok((pass, format!("obstacle-base success {sb:.2}, obstacle-arm success {sa:.2} (>= 0.6); stick-side arm mass {frac:.3} of {} (< 0.2)", arm.arm_selections)))
}
