//! End-to-end acceptance checks. Each test prints one `PASS` / `FAIL` line.
//!
//! Run with `cargo test -p red-rl --test acceptance -- --nocapture` to see
//! the report lines.

use rand::Rng;
use red_rl::cvar::Preset;
use red_rl::env::{rpbp_model, Pendulum, PendulumConfig, Rpbp, RpbpConfig, BLUE_PILL, BLUEWORLD, RED_PILL};
use red_rl::harness::metrics::{final_window, mean};
use red_rl::harness::{run_seeds, tuned_pendulum_config, tuned_rpbp_config, uniform_random_rewards, RunResult};
use red_rl::linear::{run_actor_critic, AcStepSizes, ActorCritic, TileCoder};
use red_rl::mdp::{epsilon_greedy_select, DiscretePolicy, Environment, RngStream, Trajectory};
use red_rl::oracle::{
    exact_average_reward, exact_policy_evaluation, limiting_reward_distribution, mc_cvar, MdpModel, RewardDist,
};
use red_rl::subtask::{Segment, SegmentRule, SubtaskFunction};
use red_rl::tabular::{
    run_loop, Behavior, StepSize, StepSizeSchedule, TabularAgent, TabularLearnerState, TabularMethod, Transition,
};

const RPBP_RUNS: usize = 50;
const RPBP_STEPS: usize = 100_000;
const MAJORITY: usize = 45;

fn report(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn rpbp_runs(preset: Preset, tau: f64) -> Vec<RunResult> {
    let cfg = tuned_rpbp_config(preset, tau, RPBP_STEPS, RPBP_RUNS);
    let runs = run_seeds(&cfg, 0, Ok).unwrap();
    assert!(runs.iter().all(|r| r.failure.is_none()), "{preset} run diverged");
    runs
}

fn avg(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn rpbp_risk_aware_control() {
    let red = rpbp_runs(Preset::RedCvarQ, 0.25);
    let diff = rpbp_runs(Preset::DiffQ, 0.25);
    let red_red = red
        .iter()
        .filter(|r| r.summary.greedy_policy.as_deref() == Some(&[RED_PILL, RED_PILL][..]))
        .count();
    let red_cvar = avg(red.iter().map(|r| r.summary.final_rolling_cvar));
    let diff_cvar = avg(diff.iter().map(|r| r.summary.final_rolling_cvar));
    let pass = red_red >= MAJORITY && red_cvar > diff_cvar;
    report(
        "rpbp risk-aware control",
        pass,
        format!("red/red in {red_red}/{RPBP_RUNS} seeds; rolling CVaR {red_cvar:.4} (RED) vs {diff_cvar:.4} (Diff-Q)"),
    );
    assert!(pass);
}

#[test]
fn rpbp_risk_neutral_baseline() {
    // Average reward of the epsilon-greedy blue-pill policy from the oracle.
    let model = rpbp_model();
    let behavior = DiscretePolicy::epsilon_greedy(&[BLUE_PILL, BLUE_PILL], 2, 0.1).unwrap();
    let target = exact_average_reward(&model, &behavior).unwrap();
    assert!((target + 0.605).abs() < 1e-3, "oracle average reward {target}");

    let diff = rpbp_runs(Preset::DiffQ, 0.25);
    let blue = diff
        .iter()
        .filter(|r| r.summary.greedy_policy.as_deref() == Some(&[BLUE_PILL, BLUE_PILL][..]))
        .count();
    let close = diff
        .iter()
        .filter(|r| (r.summary.final_rolling_mean + 0.605).abs() <= 0.02)
        .count();
    let pass = blue >= MAJORITY && close >= MAJORITY;
    report(
        "rpbp risk-neutral baseline",
        pass,
        format!("blue in {blue}/{RPBP_RUNS} seeds; rolling mean within 0.02 of -0.605 in {close}/{RPBP_RUNS} (oracle {target:.4})"),
    );
    assert!(pass);
}

#[test]
fn rpbp_tau_flip() {
    let mut pass = true;
    let mut detail = Vec::new();
    for tau in [0.1, 0.25, 0.5, 0.75, 0.85, 0.9] {
        let runs = rpbp_runs(Preset::RedCvarQ, tau);
        let blue: Vec<f64> = runs.iter().map(|r| r.summary.time_in_state[BLUEWORLD]).collect();
        let ok = if tau < 0.8 {
            blue.iter().filter(|b| **b < 0.2).count()
        } else {
            blue.iter().filter(|b| **b > 0.8).count()
        };
        pass &= ok * 2 > RPBP_RUNS;
        detail.push(format!("tau={tau}: {ok}/{RPBP_RUNS} (mean blue {:.3})", avg(blue)));
    }
    report("rpbp tau flip", pass, detail.join("; "));
    assert!(pass);
}

#[test]
fn estimate_convergence() {
    const TAIL: usize = 10_000;
    const RUNS: usize = 10;
    let cfg = tuned_rpbp_config(Preset::RedCvarQ, 0.25, RPBP_STEPS, RUNS);
    let runs = run_seeds(&cfg, 0, Ok).unwrap();
    let model = rpbp_model();
    let mut pass = true;
    let mut worst: (f64, f64) = (0.0, 0.0);
    for r in &runs {
        assert!(r.failure.is_none());
        let greedy = r.summary.greedy_policy.clone().unwrap();
        let behavior = DiscretePolicy::epsilon_greedy(&greedy, 2, cfg.epsilon).unwrap();
        let dist = limiting_reward_distribution(&model, &behavior).unwrap();
        let mut rng = RngStream::new(r.seed, "oracle");
        let mc = mc_cvar(|g| dist.sample(g), cfg.tau, 1_000_000, &mut rng).unwrap();
        let var_est = mean(final_window(&r.series.subtasks[0], TAIL));
        let cvar_est = mean(final_window(&r.series.estimate, TAIL));
        let (dv, dc) = ((var_est - mc.var).abs(), (cvar_est - mc.cvar).abs());
        worst = (worst.0.max(dv), worst.1.max(dc));
        pass &= dv <= 0.1 && dc <= 0.1;
    }
    report(
        "estimate convergence",
        pass,
        format!("{RUNS} seeds; worst |VaR error| {:.4}, worst |CVaR error| {:.4} (tolerance 0.1)", worst.0, worst.1),
    );
    assert!(pass);
}

fn random_linear(rng: &mut RngStream, n: usize) -> (SubtaskFunction, Vec<f64>) {
    let nonzero = |rng: &mut RngStream| {
        let m: f64 = rng.random_range(0.1..3.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    };
    let coefs: Vec<f64> = (0..n).map(|_| nonzero(rng)).collect();
    let f = SubtaskFunction::linear(rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0), coefs.clone()).unwrap();
    (f, coefs)
}

/// A 3-state chain whose reward sign is drawn independently of the state, so
/// the segment a reward falls in carries no information about the transition.
/// Magnitudes still depend on the state, which makes the values non-constant.
struct SignChain {
    p: [[f64; 3]; 3],
    p_upper: f64,
}

impl SignChain {
    fn upper_range(s: usize) -> (f64, f64) {
        (1.0, 2.0 + s as f64)
    }

    fn lower_range(s: usize) -> (f64, f64) {
        (-3.0 - s as f64, -1.0)
    }

    fn sample(&self, s: usize, rng: &mut RngStream) -> (f64, usize) {
        let (lo, hi) = if rng.random::<f64>() < self.p_upper {
            Self::upper_range(s)
        } else {
            Self::lower_range(s)
        };
        let r = rng.random_range(lo..hi);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = 2;
        for (k, pk) in self.p[s].iter().enumerate() {
            acc += pk;
            if u < acc {
                next = k;
                break;
            }
        }
        (r, next)
    }

    fn expected_extended_reward(&self, f: &SubtaskFunction, s: usize, z: &[f64]) -> f64 {
        let mid = |(a, b): (f64, f64)| 0.5 * (a + b);
        self.p_upper * f.segment_reward(1, mid(Self::upper_range(s)), z)
            + (1.0 - self.p_upper) * f.segment_reward(0, mid(Self::lower_range(s)), z)
    }
}

#[test]
fn framework_properties() {
    let mut rng = RngStream::new(2024, "properties");

    // (a) linear subtask functions: beta_i = (-1 / b_i) * delta, exactly.
    let mut linear_ok = true;
    for _ in 0..10_000 {
        let n = rng.random_range(1..4);
        let (f, coefs) = random_linear(&mut rng, n);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (r, r_bar, delta) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let betas = f.reward_extended_td_errors(r, &z, r_bar, delta);
        linear_ok &= betas.iter().zip(&coefs).all(|(b, c)| *b == (-1.0 / c) * delta);
    }

    // (b) mean reward-extended TD error vanishes at the exact Poisson solution.
    let chain = SignChain {
        p: [[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.3, 0.3, 0.4]],
        p_upper: 0.4,
    };
    let f = SubtaskFunction::new(
        SegmentRule::FixedBreakpoints {
            breakpoints: vec![-10.0, 0.0, 10.0],
        },
        vec![
            Segment::new(rng.random_range(0.5..2.0), 0.3, vec![rng.random_range(0.5..2.0), -rng.random_range(0.5..2.0)]),
            Segment::new(rng.random_range(0.5..2.0), -0.2, vec![-rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)]),
        ],
    )
    .unwrap();
    let z = [0.7, -0.4];
    let transitions: Vec<Vec<Vec<f64>>> = chain.p.iter().map(|row| vec![row.to_vec()]).collect();
    let rewards: Vec<Vec<RewardDist>> = (0..3)
        .map(|s| {
            vec![RewardDist::PointMass {
                value: chain.expected_extended_reward(&f, s, &z),
            }]
        })
        .collect();
    let names = |p: &str, k| (0..k).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let model = MdpModel::new(names("s", 3), names("a", 1), transitions, rewards).unwrap();
    let eval = exact_policy_evaluation(&model, &DiscretePolicy::fixed(&[0, 0, 0], 1).unwrap()).unwrap();
    let n = 100_000;
    let mut sums = [0.0; 2];
    let mut sq = [0.0; 2];
    let mut s = 0;
    for _ in 0..n {
        let (r, next) = chain.sample(s, &mut rng);
        let delta = f.extended_reward(r, &z) - eval.average_reward + eval.values[next] - eval.values[s];
        for (i, b) in f.reward_extended_td_errors(r, &z, eval.average_reward, delta).iter().enumerate() {
            sums[i] += b;
            sq[i] += b * b;
        }
        s = next;
    }
    let mut poisson_ok = true;
    let mut poisson_detail = Vec::new();
    for i in 0..2 {
        let m = sums[i] / n as f64;
        let se = ((sq[i] / n as f64 - m * m) / n as f64).sqrt();
        poisson_ok &= m.abs() <= 3.0 * se;
        poisson_detail.push(format!("beta_{}: {m:.2e} (SE {se:.2e})", i + 1));
    }

    // (c) coupling identities under zero initialisation.
    let (alpha, eta, eta_z) = (0.05, 0.7, 0.3);
    let (lin, coefs) = random_linear(&mut rng, 1);
    let sched = StepSizeSchedule::new(StepSize::Constant(alpha), eta, vec![eta_z]).unwrap();
    let mut learner = TabularLearnerState::new_q(2, 2, sched);
    let mut env = Rpbp::new(RpbpConfig::default()).unwrap();
    let mut env_rng = RngStream::new(5, "env");
    let mut pol_rng = RngStream::new(5, "policy");
    let mut st = env.initial_state(&mut env_rng);
    let mut coupling_err: f64 = 0.0;
    for _ in 0..10_000 {
        let a = epsilon_greedy_select(learner.q_row(st), 0.1, &mut pol_rng).unwrap();
        let out = env.step(&st, a, &mut env_rng);
        learner.red_q_step(&lin, &Transition::new(st, a, out.reward, out.next_state));
        st = out.next_state;
        let total: f64 = (0..2).flat_map(|s| learner.q_row(s).to_vec()).sum();
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-12);
        coupling_err = coupling_err
            .max(rel(learner.r_bar, eta * total))
            .max(rel(learner.z[0], eta_z * (-1.0 / coefs[0]) * total));
    }
    let coupling_ok = coupling_err <= 1e-8;

    // (d) identity subtask function reproduces the Differential learners bit for bit.
    let tab = |method| {
        let sched = StepSizeSchedule::new(StepSize::Constant(0.02), 0.5, vec![]).unwrap();
        let learner = TabularLearnerState::new_q(2, 2, sched);
        let mut agent = TabularAgent::new(method, Behavior::EpsilonGreedy { epsilon: 0.1 }, learner).unwrap();
        let mut out = Trajectory::default();
        run_loop(&mut Rpbp::new(RpbpConfig::default()).unwrap(), &mut agent, 20_000, 3, &mut out).unwrap();
        (out, agent.learner)
    };
    let (t_diff, l_diff) = tab(TabularMethod::DifferentialQ);
    let (t_red, l_red) = tab(TabularMethod::RedQ(SubtaskFunction::identity()));
    let ac = |f: Option<SubtaskFunction>| {
        let sizes = AcStepSizes::new(StepSize::Constant(2e-3), 2.0, 1e-2, vec![]).unwrap();
        let mut agent = ActorCritic::new(TileCoder::pendulum(), 3, sizes, f).unwrap();
        let mut out = Trajectory::default();
        let mut env = Pendulum::new(PendulumConfig::default()).unwrap();
        run_actor_critic(&mut env, &mut agent, 20_000, 3, &mut out).unwrap();
        (out, agent.learner)
    };
    let (a_diff, la_diff) = ac(None);
    let (a_red, la_red) = ac(Some(SubtaskFunction::identity()));
    let bits = |xs: &[f64]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let identity_ok = t_diff == t_red
        && bits(l_diff.values()) == bits(l_red.values())
        && l_diff.r_bar.to_bits() == l_red.r_bar.to_bits()
        && a_diff == a_red
        && bits(&la_diff.w) == bits(&la_red.w)
        && bits(&la_diff.theta) == bits(&la_red.theta)
        && la_diff.r_bar.to_bits() == la_red.r_bar.to_bits();

    let pass = linear_ok && poisson_ok && coupling_ok && identity_ok;
    report(
        "framework property suite",
        pass,
        format!(
            "linear beta identity {linear_ok}; mean beta at Poisson solution {poisson_ok} ({}); \
             coupling max rel err {coupling_err:.1e}; identity bit-equivalence {identity_ok}",
            poisson_detail.join(", ")
        ),
    );
    assert!(pass);
}

fn random_unichain(rng: &mut RngStream, n: usize, k: usize) -> MdpModel {
    let transitions = (0..n)
        .map(|_| {
            (0..k)
                .map(|_| {
                    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
                    let t: f64 = w.iter().sum();
                    w.iter().map(|x| x / t).collect()
                })
                .collect()
        })
        .collect();
    let rewards = (0..n)
        .map(|_| {
            (0..k)
                .map(|_| RewardDist::gaussian(rng.random_range(-3.0..3.0), rng.random_range(0.0..1.0)))
                .collect()
        })
        .collect();
    let names = |p: &str, m| (0..m).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    MdpModel::new(names("s", n), names("a", k), transitions, rewards).unwrap()
}

/// Reference stationary distribution by plain power iteration.
fn power_stationary(model: &MdpModel, policy: &DiscretePolicy) -> Vec<f64> {
    let p = model.policy_transition_matrix(policy).unwrap();
    let n = p.nrows();
    let mut mu = vec![1.0 / n as f64; n];
    for _ in 0..5_000 {
        mu = (0..n).map(|j| (0..n).map(|i| mu[i] * p[(i, j)]).sum()).collect();
    }
    mu
}

#[test]
fn oracle_self_consistency() {
    let mut rng = RngStream::new(7, "oracle-check");
    let mut worst: f64 = 0.0;
    let mut worst_power: f64 = 0.0;
    for _ in 0..100 {
        let model = random_unichain(&mut rng, 5, 3);
        let probs: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect()
            })
            .collect();
        let policy = DiscretePolicy::from_probabilities(probs).unwrap();
        let g = exact_average_reward(&model, &policy).unwrap();
        let eval = exact_policy_evaluation(&model, &policy).unwrap();
        worst = worst.max((g - eval.average_reward).abs());
        let mu = power_stationary(&model, &policy);
        let r = model.policy_reward_vector(&policy).unwrap();
        let g_power: f64 = mu.iter().zip(r.iter()).map(|(m, x)| m * x).sum();
        worst_power = worst_power.max((g - g_power).abs());
    }
    let eval_ok = worst <= 1e-10 && worst_power <= 1e-10;

    let cfg = RpbpConfig::default();
    let mut cvar_ok = true;
    let mut worst_z: f64 = 0.0;
    for (name, dist) in [("red", cfg.red_dist()), ("blue", cfg.blue_dist())] {
        for tau in [0.1, 0.25, 0.5, 0.75, 0.85, 0.9] {
            let exact = dist.cvar(tau).unwrap();
            let mut g = RngStream::new(11, &format!("mc/{name}/{tau}"));
            let mc = mc_cvar(|r| dist.sample(r), tau, 1_000_000, &mut g).unwrap();
            let z = (mc.cvar - exact).abs() / mc.std_error;
            worst_z = worst_z.max(z);
            cvar_ok &= z <= 4.0;
        }
    }
    let pass = eval_ok && cvar_ok;
    report(
        "oracle self-consistency",
        pass,
        format!(
            "100 random 5-state MDPs: max |g_eval - g| {worst:.1e}, max |g_power - g| {worst_power:.1e}; \
             analytic vs MC CVaR worst {worst_z:.2} SE"
        ),
    );
    assert!(pass);
}

#[test]
fn pendulum_qualitative_agreement() {
    const RUNS: usize = 10;
    let final_means = |preset| {
        let cfg = tuned_pendulum_config(preset, RPBP_STEPS, RUNS);
        let runs = run_seeds(&cfg, 0, |r| Ok((r.failure.is_none(), r.summary.final_rolling_mean))).unwrap();
        assert!(runs.iter().all(|(ok, _)| *ok), "{preset} run diverged");
        avg(runs.into_iter().map(|(_, m)| m))
    };
    let window = tuned_pendulum_config(Preset::DiffAc, RPBP_STEPS, RUNS).window;
    let random = avg((0..RUNS as u64).map(|seed| {
        let rewards = uniform_random_rewards(&PendulumConfig::default(), RPBP_STEPS, seed).unwrap();
        mean(final_window(&rewards, window))
    }));
    let diff = final_means(Preset::DiffAc);
    let red = final_means(Preset::RedCvarAc);
    let improvement = |x: f64| (x - random) / random.abs();
    let agreement = (diff - red).abs() / diff.abs().max(red.abs());
    let pass = improvement(diff) >= 0.5 && improvement(red) >= 0.5 && agreement <= 0.15;
    report(
        "pendulum qualitative agreement",
        pass,
        format!(
            "random {random:.3}, Diff AC {diff:.3} (+{:.0}%), RED CVaR AC {red:.3} (+{:.0}%), relative gap {:.0}%",
            100.0 * improvement(diff),
            100.0 * improvement(red),
            100.0 * agreement
        ),
    );
    assert!(pass);
}
