//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance` (add `--release` for
//! representative timings).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ddpg_portfolio::agent::{train, DdpgAgent, EpsilonSchedule, OuConfig, OuNoise, TrainConfig};
use ddpg_portfolio::agent::{ActorNet, CriticNet};
use ddpg_portfolio::app::{cmd_compare, cmd_ingest, cmd_train, RunConfig};
use ddpg_portfolio::backtest::{run_policy, AgentPolicy, BacktestRun, ScriptedPolicy};
use ddpg_portfolio::baselines::{
    eg_update, olmar_update, pamr_update, BaselineConfig, Strategy, StrategyKind, UpConfig,
};
use ddpg_portfolio::data::{drift_market, random_market, AlignedPanel};
use ddpg_portfolio::env::{mark_to_market, ActionWeights, EnvConfig, MarketEnv};
use ddpg_portfolio::metrics::{carr, mdd, sharpe, sharpe_from_returns, MetricError};
use ddpg_portfolio::neural::{grad_check, soft_update, Activation, DenseLayer, Matrix, Parameters};
use ddpg_portfolio::util::{exact_sum, SeedStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget_secs: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < budget_secs, || {
        format!("took {:.1} s, budget {budget_secs} s", elapsed.as_secs_f64())
    })
}

/// Uniform draw from the simplex (normalised exponentials).
fn dirichlet(m: usize, rng: &mut impl Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Random portfolio: mostly interior, sometimes concentrated or uniform.
fn random_weights(m: usize, rng: &mut impl Rng) -> ActionWeights {
    let w = match rng.random_range(0..10) {
        0 => {
            let mut w = vec![0.0; m];
            w[rng.random_range(0..m)] = 1.0;
            w
        }
        1 => vec![1.0 / m as f64; m],
        _ => dirichlet(m, rng),
    };
    ActionWeights::new(w).expect("weights lie on the simplex")
}

fn random_panel(days: usize, m: usize, volatility: f64, rng: &mut impl Rng) -> AlignedPanel {
    let starts: Vec<f64> = (0..m).map(|_| rng.random_range(20.0..200.0)).collect();
    random_market(days, &starts, &vec![0.0; m], volatility, rng).expect("valid panel")
}

// ---------------------------------------------------------------- 1

fn metric_oracles() -> Outcome {
    let started = Instant::now();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);

    ensure(carr(&[5.0; 300]).unwrap() == 0.0, || "flat curve CARR".into())?;
    let mut two_years = vec![1.0; 505];
    two_years[504] = 4.0;
    ensure(carr(&two_years).unwrap() == 1.0, || "4x over two years".into())?;
    let mut one_year = vec![1.0; 253];
    one_year[252] = 1.1;
    let c = carr(&one_year).unwrap();
    ensure(close(c, 0.1), || format!("1.1x over one year gave {c}"))?;

    let alt = sharpe_from_returns(&[0.1, -0.1, 0.1, -0.1], 0.0).unwrap();
    ensure(alt.daily == 0.0, || format!("alternating returns SR {}", alt.daily))?;
    ensure(matches!(sharpe_from_returns(&[0.01; 5], 0.0), Err(MetricError::ZeroVariance)), || {
        "constant returns must be a zero-variance error".into()
    })?;
    let s = sharpe_from_returns(&[0.01, 0.02, 0.03], 0.0).unwrap();
    ensure(close(s.daily, 2.0) && close(s.annualized, 2.0 * 252f64.sqrt()), || {
        format!("SR of [0.01, 0.02, 0.03]: {s:?}")
    })?;
    let curve = [1.0, 1.01, 1.01 * 1.02, 1.01 * 1.02 * 1.03];
    let s = sharpe(&curve).unwrap();
    ensure((s.daily - 2.0).abs() < 1e-9, || format!("SR from curve: {s:?}"))?;

    ensure(mdd(&[1.0, 2.0, 3.0, 4.0]) == 0.0, || "monotone curve MDD".into())?;
    ensure(mdd(&[2.0, 1.0]) == 1.0, || "MDD [2, 1]".into())?;
    ensure(mdd(&[1.0, 3.0, 2.0, 4.0]) == 0.5, || "MDD [1, 3, 2, 4]".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..1000 {
        let mut v = rng.random_range(1.0..100.0);
        let values: Vec<f64> = (0..500)
            .map(|_| {
                v *= (rng.random_range(-0.05..0.05f64)).exp();
                v
            })
            .collect();
        let mut brute = 0.0_f64;
        for i in 0..values.len() {
            for j in i + 1..values.len() {
                brute = brute.max((values[i] - values[j]) / values[j]);
            }
        }
        let fast = mdd(&values);
        ensure(fast == brute, || format!("curve {k}: streaming {fast} vs brute force {brute}"))?;
    }
    within_budget(started.elapsed(), 10.0)?;
    Ok("fixtures exact; streaming MDD equals brute force on 1000 curves of 500 points".into())
}

// ---------------------------------------------------------------- 2

/// Distance of the nearest relu pre-activation from its kink when `x` runs
/// through `layers` in sequence.
fn relu_margin(layers: &[&DenseLayer], x: &Matrix) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    for layer in layers {
        if layer.activation == Activation::Relu {
            let n_in = layer.input_size();
            for b in 0..h.rows {
                for (o, bias) in layer.bias.values.iter().enumerate() {
                    let w = &layer.weight.values[o * n_in..(o + 1) * n_in];
                    let z: f64 = w.iter().zip(h.row(b)).map(|(w, x)| w * x).sum::<f64>() + bias;
                    margin = margin.min(z.abs());
                }
            }
        }
        h = layer.forward(&h).unwrap().0;
    }
    margin
}

/// Central differences are only meaningful where the loss is smooth over
/// the step, so check points are redrawn until every relu pre-activation
/// sits at least this far from zero (each step moves them by ~1e-4).
const KINK_MARGIN: f64 = 1e-3;

fn gradient_suite() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut draw = |rows: usize, cols: usize| {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };

    let mut actor = ActorNet::new(42, &[256, 128, 64], 8, &mut ChaCha8Rng::seed_from_u64(20));
    let mut redraws = 0;
    let x = loop {
        let x = draw(2, 42);
        let layers: Vec<&DenseLayer> = actor.layers.iter().collect();
        if relu_margin(&layers, &x) >= KINK_MARGIN {
            break x;
        }
        redraws += 1;
    };
    let coef = draw(2, 8);
    let actor_loss = |a: &ActorNet| {
        let y = a.forward(&x).unwrap().0;
        y.data.iter().zip(&coef.data).map(|(y, c)| y * c).sum::<f64>()
    };
    let actor_grad = |a: &mut ActorNet| {
        a.zero_grad();
        let (_, cache) = a.forward(&x).unwrap();
        a.backward(&cache, &coef, true);
    };
    let actor_report = grad_check(&mut actor, actor_loss, actor_grad, None);

    // a three-step window so the recurrent weights are exercised
    let mut critic = CriticNet::new(50, 100, 50, 0.0, &mut ChaCha8Rng::seed_from_u64(21));
    let seq = loop {
        let seq: Vec<Matrix> = (0..3).map(|_| draw(2, 50)).collect();
        let zeros = Matrix::zeros(2, 100);
        let h1 = critic.lstm1.forward(&seq, &zeros, &zeros).unwrap().h_seq;
        let h2 = critic.lstm2.forward(&h1, &zeros, &zeros).unwrap().h_last;
        if relu_margin(&[&critic.fc], &h2) >= KINK_MARGIN {
            break seq;
        }
        redraws += 1;
    };
    let dq = draw(2, 1);
    let critic_loss = |c: &CriticNet| {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let q = c.forward(&seq, false, &mut r).unwrap().0;
        q.data.iter().zip(&dq.data).map(|(q, d)| q * d).sum::<f64>()
    };
    let critic_grad = |c: &mut CriticNet| {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        c.zero_grad();
        let (_, cache) = c.forward(&seq, false, &mut r).unwrap();
        c.backward(&cache, &dq, true).unwrap();
    };
    let critic_report = grad_check(&mut critic, critic_loss, critic_grad, Some(2000));

    let actor_n: usize = actor_report.blocks.iter().map(|b| b.checked).sum();
    let critic_n: usize = critic_report.blocks.iter().map(|b| b.checked).sum();
    let (ea, ec) = (actor_report.max_rel_error(), critic_report.max_rel_error());
    ensure(ea < 1e-4 && ec < 1e-4, || {
        format!("max relative error actor {ea:.3e}, critic {ec:.3e}\n{actor_report}{critic_report}")
    })?;
    within_budget(started.elapsed(), 60.0)?;
    Ok(format!(
        "actor {actor_n}/{} params, max rel {ea:.2e}; critic {critic_n}/{} params, max rel {ec:.2e} ({redraws} inputs redrawn)",
        actor.parameter_count(),
        critic.parameter_count()
    ))
}

// ---------------------------------------------------------------- 3

fn environment_accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut steps = 0;
    let mut episodes = 0;
    let mut worst = 0.0_f64;
    while steps < 10_000 {
        let m = rng.random_range(1..=6);
        let panel = random_panel(201, m, 0.03, &mut rng);
        let config = EnvConfig {
            initial_cash: [1e6, 5e4, 2e3][episodes % 3],
            cost_per_share: [0.001, 0.0, 0.05][episodes % 3],
            cost_enabled: episodes % 4 != 3,
        };
        let mut env = MarketEnv::new(&panel, config.clone(), 1).unwrap();
        env.reset();
        let initial = env.state().value;
        let mut rewards = vec![];
        loop {
            let before = env.state().clone();
            let t = before.t;
            let result = if rng.random_range(0..8) == 0 {
                env.hold().unwrap()
            } else {
                env.step(&random_weights(m, &mut rng)).unwrap()
            };
            steps += 1;
            let s = env.state();
            ensure(s.cash >= 0.0, || format!("negative cash {} at step {steps}", s.cash))?;
            let invested: f64 = s.holdings.iter().zip(&panel.prices[t + 1]).map(|(&h, &p)| h as f64 * p).sum();
            let rel = (s.value - (invested + s.cash)).abs() / s.value.abs().max(1.0);
            worst = worst.max(rel);
            ensure(rel <= 1e-9, || format!("V != sum(h p) + cash by {rel:.3e} at step {steps}"))?;
            // self-financing: the trade moves value only by the fee
            let before_trade = mark_to_market(&before.holdings, &panel.prices[t], before.cash);
            let after_trade = mark_to_market(&s.holdings, &panel.prices[t], s.cash);
            let leak = (before_trade - result.cost_paid - after_trade).abs() / before_trade.max(1.0);
            ensure(leak <= 1e-9, || format!("trade leaked {leak:.3e} of value at step {steps}"))?;
            let turnover: u64 = s.holdings.iter().zip(&before.holdings).map(|(a, b)| a.abs_diff(*b)).sum();
            let fee = if config.cost_enabled { config.cost_per_share } else { 0.0 };
            ensure(result.cost_paid == fee * turnover as f64, || format!("fee mismatch at step {steps}"))?;
            rewards.push(result.reward);
            if result.done {
                break;
            }
        }
        let total = exact_sum(rewards.iter().copied());
        let direct = env.state().value - initial;
        ensure(total == direct, || format!("episode {episodes}: reward sum {total} vs V_T - V_0 {direct}"))?;
        episodes += 1;
    }
    Ok(format!("{steps} steps in {episodes} episodes; worst identity error {worst:.1e}; reward sums exact"))
}

// ---------------------------------------------------------------- 4

fn cost_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut compared = 0;
    for k in 0..100 {
        let m = rng.random_range(2..=5);
        let days = 120;
        let panel = random_panel(days, m, 0.02, &mut rng);
        let script: Vec<ActionWeights> = (1..days).map(|_| random_weights(m, &mut rng)).collect();
        let run = |config: EnvConfig| -> BacktestRun {
            run_policy(&panel, &config, 1, days - 1, &mut ScriptedPolicy::new("script", script.clone())).unwrap()
        };
        let cash = 1e5;
        let free = run(EnvConfig { initial_cash: cash, cost_per_share: 0.001, cost_enabled: false });
        let costly = run(EnvConfig { initial_cash: cash, cost_per_share: 0.001, cost_enabled: true });
        let zero = run(EnvConfig { initial_cash: cash, cost_per_share: 0.0, cost_enabled: true });
        for (i, (c, f)) in costly.curve.values.iter().zip(&free.curve.values).enumerate() {
            ensure(c <= f, || format!("sequence {k}, day {i}: with costs {c} > without {f}"))?;
            compared += 1;
        }
        let bits = |r: &BacktestRun| r.curve.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&zero) == bits(&free), || format!("sequence {k}: zero fee differs from cost-free run"))?;
    }
    Ok(format!("100 sequences, {compared} points ordered; zero-fee runs bit-identical"))
}

// ---------------------------------------------------------------- 5

fn schedule_and_soft_update() -> Outcome {
    let eps = EpsilonSchedule::default();
    for (n, want) in [(0, 0.5), (999, 0.5), (1000, 0.25), (1999, 0.25), (2000, 0.1), (1_000_000, 0.1)] {
        ensure(eps.epsilon(n) == want, || format!("epsilon({n}) = {}, expected {want}", eps.epsilon(n)))?;
    }

    let tau = TrainConfig::default().tau;
    ensure(tau == 0.09, || format!("default tau {tau}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let online = ActorNet::new(42, &[256, 128, 64], 8, &mut rng);
    let mut target = ActorNet::new(42, &[256, 128, 64], 8, &mut rng);
    let frozen = online.clone();
    let initial: Vec<f64> = target.parameters().iter().flat_map(|(_, t)| t.values.clone()).collect();
    let online_values: Vec<f64> = online.parameters().iter().flat_map(|(_, t)| t.values.clone()).collect();
    let mut worst = 0.0_f64;
    for k in 1..=50 {
        soft_update(&online, &mut target, tau).unwrap();
        let factor = (1.0 - tau).powi(k);
        let current = target.parameters().iter().flat_map(|(_, t)| t.values.clone()).collect::<Vec<_>>();
        for ((c, o), i) in current.iter().zip(&online_values).zip(&initial) {
            let expected = factor * (i - o);
            let scale = o.abs().max(i.abs());
            let dev = ((c - o) - expected).abs() / scale;
            worst = worst.max(dev);
        }
    }
    ensure(online.parameters() == frozen.parameters(), || "online parameters moved".into())?;
    // each step rounds once at the scale of the parameters; 50 steps stay
    // within a few hundred ulps
    ensure(worst <= 1e-13, || format!("soft update deviates from (1 - tau)^k by {worst:.3e}"))?;
    Ok(format!("epsilon boundaries exact; target error follows 0.91^k within {worst:.1e} relative over 50 steps"))
}

// ---------------------------------------------------------------- 6

fn ou_statistics() -> Outcome {
    let started = Instant::now();
    let config = OuConfig { theta: 0.15, mu: 0.0, sigma: 0.2, dt: 1.0 };
    let mut noise = OuNoise::new(&config, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        noise.sample(&mut rng);
    }
    let xs: Vec<f64> = (0..100_000).map(|_| noise.sample(&mut rng)[0]).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let cov1 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0);
    let rho = cov1 / var;
    let rho_target = (-0.15f64).exp();
    let var_target = 0.2 * 0.2 / (2.0 * 0.15);
    ensure((rho - rho_target).abs() <= 0.05, || format!("lag-1 autocorrelation {rho:.4} vs {rho_target:.4}"))?;
    ensure((var / var_target - 1.0).abs() <= 0.10, || format!("variance {var:.4} vs {var_target:.4}"))?;
    within_budget(started.elapsed(), 5.0)?;
    Ok(format!(
        "lag-1 autocorrelation {rho:.4} (target {rho_target:.4}), variance {var:.4} (target {var_target:.4}, {:+.1}%)",
        100.0 * (var / var_target - 1.0)
    ))
}

// ---------------------------------------------------------------- 7

/// Minimiser of `objective` over the 2-asset simplex on a 1e-5 grid.
fn grid_min(objective: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut best = (f64::INFINITY, vec![]);
    for k in 0..=100_000 {
        let a = k as f64 / 100_000.0;
        let w = [a, 1.0 - a];
        let v = objective(&w);
        if v < best.0 {
            best = (v, w.to_vec());
        }
    }
    best.1
}

fn baseline_degeneracies() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let m = rng.random_range(2..=6);
        let w = dirichlet(m, &mut rng);
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(0.8..1.2)).collect();
        // held up to the renormalisation's rounding
        let holds = |v: Vec<f64>| v.iter().zip(&w).all(|(a, b)| (a - b).abs() <= 1e-15);
        ensure(holds(eg_update(&w, &x, 0.0)), || format!("EG(eta = 0) moved {w:?}"))?;
        // PAMR: a portfolio return at or below epsilon incurs no loss
        let wx: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        ensure(holds(pamr_update(&w, &x, wx + 0.01)), || format!("PAMR below epsilon moved {w:?}"))?;
        // OLMAR: predicted return already above epsilon
        let prices: Vec<Vec<f64>> = (0..5).map(|_| (0..m).map(|_| rng.random_range(50.0..150.0)).collect()).collect();
        ensure(holds(olmar_update(&w, &prices, 0.0)), || format!("OLMAR with satisfied constraint moved {w:?}"))?;
    }

    let panel = random_panel(2001, 4, 0.02, &mut rng);
    let config = BaselineConfig { up: UpConfig { samples: 20_000 }, ..BaselineConfig::default() };
    let mut decisions = 0;
    for kind in StrategyKind::ALL {
        let mut s = Strategy::new(kind, config.clone(), SeedStream::new(7).rng("up"));
        let run = run_policy(&panel, &EnvConfig::default(), 1, 2000, &mut s).map_err(|e| format!("{kind}: {e}"))?;
        for w in run.weights.iter().flatten() {
            let sum: f64 = w.iter().sum();
            ensure(w.iter().all(|&v| v >= 0.0) && (sum - 1.0).abs() <= 1e-9, || {
                format!("{kind} left the simplex: {w:?}")
            })?;
            decisions += 1;
        }
    }

    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-3);
    let mut cases = 0;
    for _ in 0..20 {
        let w = dirichlet(2, &mut rng);
        let prices: Vec<Vec<f64>> =
            (0..5).map(|_| vec![rng.random_range(50.0..150.0), rng.random_range(50.0..150.0)]).collect();
        let last = &prices[prices.len() - 1];
        let xt: Vec<f64> = (0..2).map(|i| prices.iter().map(|p| p[i]).sum::<f64>() / 5.0 / last[i]).collect();
        let eps = rng.random_range(1.0..1.5);
        let got = olmar_update(&w, &prices, eps);
        let oracle = grid_min(|b| {
            let short = (eps - (b[0] * xt[0] + b[1] * xt[1])).max(0.0);
            1e6 * short + (b[0] - w[0]).powi(2) + (b[1] - w[1]).powi(2)
        });
        ensure(close(&got, &oracle), || format!("OLMAR {got:?} vs grid {oracle:?} (w {w:?}, x~ {xt:?}, eps {eps})"))?;

        let x = [rng.random_range(0.9..1.1), rng.random_range(0.9..1.1)];
        let eps = rng.random_range(0.8..1.0);
        let got = pamr_update(&w, &x, eps);
        let oracle = grid_min(|b| {
            let over = (b[0] * x[0] + b[1] * x[1] - eps).max(0.0);
            1e6 * over + (b[0] - w[0]).powi(2) + (b[1] - w[1]).powi(2)
        });
        ensure(close(&got, &oracle), || format!("PAMR {got:?} vs grid {oracle:?} (w {w:?}, x {x:?}, eps {eps})"))?;
        cases += 2;
    }
    Ok(format!(
        "degenerate updates hold; {decisions} decisions of 7 strategies on the simplex; {cases} grid-oracle cases within 1e-3"
    ))
}

// ---------------------------------------------------------------- 8

fn cross_module_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = 8;
    let days = 400;
    let panel = random_panel(days, m, 0.02, &mut rng);
    let tickers = panel.tickers.clone();
    let mut agent = DdpgAgent::new(TrainConfig::default(), tickers, panel.prices[1].clone(), 1e6).unwrap();
    let last = agent.actor.layers.last_mut().unwrap();
    last.weight.values.iter_mut().for_each(|v| *v = 0.0);
    last.bias.values.iter_mut().for_each(|v| *v = 0.0);

    let bits = |r: &BacktestRun| r.curve.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    for cost_enabled in [false, true] {
        let env = EnvConfig { cost_enabled, ..EnvConfig::default() };
        let ddpg = run_policy(&panel, &env, 1, days - 1, &mut AgentPolicy::new(&agent)).unwrap();
        let mut crp = Strategy::new(StrategyKind::Crp, BaselineConfig::default(), SeedStream::new(0).rng("up"));
        let crp = run_policy(&panel, &env, 1, days - 1, &mut crp).unwrap();
        ensure(bits(&ddpg) == bits(&crp), || format!("uniform agent and CRP differ (costs {cost_enabled})"))?;
    }

    // Equal money per asset on the first day, then never trade.
    let m = 4;
    let panel = random_panel(days, m, 0.02, &mut rng);
    let env = EnvConfig { cost_enabled: false, ..EnvConfig::default() };
    let v0 = env.initial_cash;
    let start = &panel.prices[1];
    let shares: Vec<u64> = start.iter().map(|p| ((v0 / m as f64) / p).floor() as u64).collect();
    let spent: f64 = shares.iter().zip(start).map(|(&h, &p)| h as f64 * p).sum();
    let cash = v0 - spent;
    let mut expected = vec![v0];
    for prices in &panel.prices[2..days] {
        expected.push(shares.iter().zip(prices).map(|(&h, &p)| h as f64 * p).sum::<f64>() + cash);
    }
    let mut bah = Strategy::new(StrategyKind::Bah, BaselineConfig::default(), SeedStream::new(0).rng("up"));
    let bah = run_policy(&panel, &env, 1, days - 1, &mut bah).unwrap();
    let expected_bits: Vec<u64> = expected.iter().map(|v| v.to_bits()).collect();
    ensure(bits(&bah) == expected_bits, || "BAH differs from the equal-money buy-and-hold construction".into())?;
    Ok(format!("uniform agent == CRP bit-for-bit (with and without costs); BAH == equal-money benchmark over {} days", days - 1))
}

// ---------------------------------------------------------------- 9

fn learning_smoke_test() -> Outcome {
    let started = Instant::now();
    let days = 2000;
    let panel = drift_market(days, &[100.0, 100.0], &[0.001, -0.001]).unwrap();
    let env = EnvConfig::default();
    let config = TrainConfig { epochs: 50, reward_scale: 0.001, train_every: 25, seed: 7, ..TrainConfig::default() };
    let (agent, log) = train(&panel, &env, 1, days - 1, &config).map_err(|e| e.to_string())?;
    let ddpg = run_policy(&panel, &env, 1, days - 1, &mut AgentPolicy::new(&agent)).map_err(|e| e.to_string())?;
    let mut bah = Strategy::new(StrategyKind::Bah, BaselineConfig::default(), SeedStream::new(0).rng("up"));
    let bah = run_policy(&panel, &env, 1, days - 1, &mut bah).map_err(|e| e.to_string())?;
    let w0 = ddpg.mean_weight(0).unwrap();
    let (v, b) = (ddpg.final_value(), bah.final_value());
    let elapsed = started.elapsed();
    let detail = format!(
        "{} epochs, mean weight on rising asset {w0:.4}, final wealth {v:.0} vs BAH {b:.0}, {:.0} s",
        log.rows.len(),
        elapsed.as_secs_f64()
    );
    ensure(w0 > 0.8, || format!("mean weight too low: {detail}"))?;
    ensure(v > b, || format!("did not beat BAH: {detail}"))?;
    within_budget(elapsed, 300.0)?;
    Ok(detail)
}

// ---------------------------------------------------------------- 10

const DETERMINISM_CONFIG: &str = r#"
[run]
seed = 11

[data.synthetic]
days = 260
start_price = 50.0
drift = [0.0006, -0.0002, 0.0003]
volatility = 0.012

[train]
epochs = 2
batch_size = 32
train_every = 4

[baselines.up]
samples = 2000
"#;

fn full_run(dir: &Path) -> Result<(), String> {
    let mut config = RunConfig::from_toml(DETERMINISM_CONFIG, &[]).map_err(|e| e.to_string())?;
    config.run.out_dir = dir.to_path_buf();
    cmd_ingest(&config).map_err(|e| e.to_string())?;
    cmd_train(&config).map_err(|e| e.to_string())?;
    cmd_compare(&config).map_err(|e| e.to_string())?;
    Ok(())
}

fn list_files(root: &Path) -> Vec<String> {
    let mut out = vec![];
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_run(a.path())?;
    full_run(b.path())?;
    let files = list_files(a.path());
    ensure(files == list_files(b.path()), || "runs wrote different file sets".into())?;
    for required in ["report.csv", "report.txt", "curves.csv", "checkpoint.json", "curves/DDPG.csv"] {
        ensure(files.iter().any(|f| f == required), || format!("missing artifact {required}"))?;
    }
    let mut compared = 0;
    for f in &files {
        // the manifest records wall-clock timings; everything else must match
        if f == "manifest.json" {
            continue;
        }
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        ensure(x == y, || format!("{f} differs between runs"))?;
        compared += 1;
    }
    Ok(format!("{compared} artifacts byte-identical across two runs"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("metric oracles", metric_oracles),
        ("gradient suite", gradient_suite),
        ("environment accounting", environment_accounting),
        ("cost monotonicity", cost_monotonicity),
        ("schedule / soft-update exactness", schedule_and_soft_update),
        ("OU statistics", ou_statistics),
        ("baseline degeneracies", baseline_degeneracies),
        ("cross-module equivalence", cross_module_equivalence),
        ("learning smoke test", learning_smoke_test),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|x| *x == id || name.contains(x.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id:>2} {name} ({secs:.1} s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
