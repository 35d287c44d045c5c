//! Reference implementations and checks shared by the integration tests and
//! the acceptance suite. Each check returns a one-line detail on success and
//! a description of the first discrepancy on failure.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tl_slicing::drl::{
    mixed_prob, ppo_loss_and_grad, returns_and_advantages, Architecture, PolicyWeights, PpoHyperparams, Role,
    Transition,
};
use tl_slicing::env::{simulate_window, slot_budget, ActionSpace, EnvConfig, SliceKpis, SliceQueues, SlicingEnv};
use tl_slicing::seeding;
use tl_slicing::traffic::Packet;

pub type Check = Result<String, String>;

// ---------------------------------------------------------------------------
// Naive reference scheduler: one byte at a time over a flat packet list.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct RefSlice {
    /// Pending packets in arrival order: (user, arrival_slot, remaining).
    pending: Vec<(usize, u64, u64)>,
    cursor: usize,
    /// Number of user slots seen so far (max user id + 1).
    users: usize,
}

impl RefSlice {
    fn has_backlog(&self, user: usize) -> bool {
        self.pending.iter().any(|p| p.0 == user)
    }

    /// Returns (latency sum, served packets, served bytes) for the window.
    fn run(&mut self, arrivals: &[Packet], budget: u64, start: u64, len: u64) -> (u64, u64, u64) {
        let (mut lat, mut npk, mut bytes) = (0, 0, 0);
        for slot in start..start + len {
            for p in arrivals.iter().filter(|p| p.arrival_slot == slot) {
                self.pending.push((p.user_id, p.arrival_slot, p.size as u64));
                self.users = self.users.max(p.user_id + 1);
            }
            for _ in 0..budget {
                if self.pending.is_empty() {
                    break;
                }
                let mut u = self.cursor % self.users;
                while !self.has_backlog(u) {
                    u = (u + 1) % self.users;
                }
                let i = self.pending.iter().position(|p| p.0 == u).unwrap();
                self.pending[i].2 -= 1;
                bytes += 1;
                if self.pending[i].2 == 0 {
                    let (_, arr, _) = self.pending.remove(i);
                    lat += slot - arr + 1;
                    npk += 1;
                    self.cursor = (u + 1) % self.users;
                } else {
                    self.cursor = u;
                }
            }
        }
        (lat, npk, bytes)
    }
}

fn random_arrivals(rng: &mut ChaCha8Rng, start: u64, len: u64, slice: usize) -> Vec<Packet> {
    let n = rng.random_range(0..25);
    let mut v: Vec<Packet> = (0..n)
        .map(|_| {
            Packet::new(
                start + rng.random_range(0..len),
                rng.random_range(1..600),
                rng.random_range(0..6),
                slice,
            )
        })
        .collect();
    v.sort_by_key(|p| (p.arrival_slot, p.user_id));
    v
}

/// Field-by-field comparison of `simulate_window` against [`RefSlice`] over
/// `windows` consecutive random windows (state carries across windows).
pub fn scheduler_matches_reference(windows: u64, seed: u64) -> Check {
    let mut rng = seeding::rng(seed, 0);
    let slices = 3;
    let len = 20;
    let mut fast = vec![SliceQueues::default(); slices];
    let mut slow = vec![RefSlice::default(); slices];
    let mut compared = 0;
    for w in 0..windows {
        let start = w * len;
        let capacity = rng.random_range(50..1500u64);
        let mut shares: Vec<f64> = (0..slices).map(|_| rng.random_range(1..=10) as f64 / 30.0).collect();
        if rng.random_bool(0.1) {
            shares[0] = 0.0;
        }
        let arrivals: Vec<Vec<Packet>> = (0..slices).map(|s| random_arrivals(&mut rng, start, len, s)).collect();
        let got = simulate_window(&mut fast, &arrivals, &shares, capacity, start, len);
        for s in 0..slices {
            let budget = slot_budget(shares[s], capacity);
            let (lat, npk, bytes) = slow[s].run(&arrivals[s], budget, start, len);
            let end = start + len;
            let age: u64 = slow[s].pending.iter().map(|p| end - p.1).sum();
            let pend = slow[s].pending.len() as u64;
            let want = SliceKpis {
                avg_latency_ms: if npk + pend == 0 { 0.0 } else { (lat + age) as f64 / (npk + pend) as f64 },
                packets_served: npk,
                packets_pending: pend,
                bytes_served: bytes,
                bytes_pending: slow[s].pending.iter().map(|p| p.2).sum(),
                demand_bytes: arrivals[s].iter().map(|p| p.size as u64).sum(),
                bytes_dropped: 0,
                users_departed: 0,
                budget_per_slot: budget,
            };
            if got[s] != want {
                return Err(format!("window {w} slice {s}: got {:?}, reference {:?}", got[s], want));
            }
            let q: Vec<(usize, u64, u64)> = (0..fast[s].num_user_slots())
                .flat_map(|u| fast[s].user_queue(u).unwrap().iter().map(|p| (p.user_id, p.arrival_slot, p.remaining as u64)))
                .collect();
            let mut r = slow[s].pending.clone();
            r.sort_by_key(|p| p.0);
            if q != r {
                return Err(format!("window {w} slice {s}: queue contents differ"));
            }
            compared += 1;
        }
    }
    Ok(format!("{windows} windows, {compared} slice-windows identical"))
}

/// Arrived = served + pending + dropped, exactly, after every window.
pub fn byte_accounting(cfg: EnvConfig, windows: u64, seed: u64) -> Check {
    let mut env = SlicingEnv::new(cfg).map_err(|e| e.to_string())?;
    env.reset(seed);
    let mut rng = seeding::rng(seed, 1);
    let n = env.action_space().len();
    let mut dropped_any = 0;
    for w in 0..windows {
        env.step(rng.random_range(0..n)).map_err(|e| e.to_string())?;
        let t = env.totals();
        let pending = env.pending_bytes();
        if t.arrived != t.served + pending + t.dropped {
            return Err(format!(
                "window {w}: arrived {} != served {} + pending {pending} + dropped {}",
                t.arrived, t.served, t.dropped
            ));
        }
        dropped_any = t.dropped;
    }
    let t = env.totals();
    Ok(format!(
        "{windows} windows: arrived {} = served {} + pending {} + dropped {dropped_any}",
        t.arrived,
        t.served,
        env.pending_bytes()
    ))
}

// ---------------------------------------------------------------------------
// PPO gradient check
// ---------------------------------------------------------------------------

pub fn tiny_arch() -> Architecture {
    Architecture::new(3, vec![4], 6)
}

fn random_buffer(w: &PolicyWeights, rng: &mut ChaCha8Rng, n: usize) -> Vec<Transition> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.01).collect();
            let sum: f64 = raw.iter().sum();
            let state: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let f = w.forward(&state).unwrap();
            let action = rng.random_range(0..6);
            let epsilon = rng.random_range(0.0..0.3);
            // old policy differs from the current one so ratios spread out
            let log_prob = mixed_prob(&f.probs, action, epsilon).ln() + rng.random_range(-0.4..0.4);
            Transition {
                state,
                action,
                log_prob,
                reward: rng.random(),
                value: rng.random_range(-0.5..0.5),
                epsilon,
            }
        })
        .collect()
}

/// Worst relative error `|g - g_fd|_2 / (|g|_2 + |g_fd|_2)` over `buffers`
/// random buffers of the tiny network, central differences with step `h`.
pub fn ppo_gradient_check(buffers: usize, h: f64, seed: u64) -> Result<f64, String> {
    let hyper = PpoHyperparams::default();
    let mut worst: f64 = 0.0;
    for b in 0..buffers {
        let mut rng = seeding::rng(seed, b as u64);
        let mut w = PolicyWeights::random(tiny_arch(), Role::Learner, &mut rng);
        for p in &mut w.params {
            *p += rng.random_range(-0.3..0.3);
        }
        let buf = random_buffer(&w, &mut rng, hyper.batch_size);
        let (ret, adv) = returns_and_advantages(&buf, Some(0.3), hyper.discount);
        let (_, grad) = ppo_loss_and_grad(&w, &buf, &ret, &adv, &hyper).map_err(|e| e.to_string())?;
        let loss = |p: &PolicyWeights| ppo_loss_and_grad(p, &buf, &ret, &adv, &hyper).unwrap().0.total;
        let mut fd = vec![0.0; grad.len()];
        for i in 0..grad.len() {
            let mut plus = w.clone();
            plus.params[i] += h;
            let mut minus = w.clone();
            minus.params[i] -= h;
            fd[i] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm = grad.iter().map(|a| a * a).sum::<f64>().sqrt() + fd.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = if norm == 0.0 { 0.0 } else { diff / norm };
        worst = worst.max(rel);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Distillation / GPI brute force
// ---------------------------------------------------------------------------

/// Nearest grid point to the expert/learner midpoint by a floating-point
/// scan over shares; ties (within 1e-9) go to the lowest id.
pub fn distill_brute_force(e: usize, l: usize, space: &ActionSpace) -> usize {
    let ae = &space.allocations()[e].shares;
    let al = &space.allocations()[l].shares;
    let mid: Vec<f64> = ae.iter().zip(al).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut best = (f64::INFINITY, 0);
    for (id, a) in space.iter().enumerate() {
        let d: f64 = a.shares.iter().zip(&mid).map(|(x, m)| (x - m) * (x - m)).sum();
        if d < best.0 - 1e-9 {
            best = (d, id);
        }
    }
    best.1
}

/// Exhaustive (expert × action) scan for the largest preference; ties to
/// the lowest action id.
pub fn gpi_brute_force(prefs: &[Vec<f64>]) -> usize {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for p in prefs {
        for (a, &v) in p.iter().enumerate() {
            if v > best.0 || (v == best.0 && a < best.1) {
                best = (v, a);
            }
        }
    }
    best.1
}

// ---------------------------------------------------------------------------
// Traffic fidelity
// ---------------------------------------------------------------------------

use tl_slicing::traffic::{Interarrival, TruncatedPareto};

/// Monte Carlo mean within `tol` (relative) of `target`, with every sample
/// at most `max`.
pub fn sample_mean_check(
    name: &str,
    n: usize,
    target: f64,
    max: f64,
    tol: f64,
    mut draw: impl FnMut() -> f64,
) -> Check {
    let mut sum = 0.0;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let x = draw();
        worst = worst.max(x);
        sum += x;
    }
    let m = sum / n as f64;
    let rel = (m - target).abs() / target;
    let line = format!("{name}: mean {m:.4} (target {target}, {:+.3}%), max sample {worst:.3} <= {max}", 100.0 * (m - target) / target);
    if rel <= tol && worst <= max {
        Ok(line)
    } else {
        Err(line)
    }
}

pub fn traffic_fidelity(n: usize, seed: u64) -> Result<Vec<String>, Vec<String>> {
    let ia = TruncatedPareto::calibrated(1.2, 6.0, 12.5).unwrap();
    let sz = TruncatedPareto::calibrated(1.2, 100.0, 250.0).unwrap();
    let vonr = Interarrival::Uniform { min_ms: 0.0, max_ms: 160.0 };
    let mut r1 = seeding::rng(seed, 1);
    let mut r2 = seeding::rng(seed, 2);
    let mut r3 = seeding::rng(seed, 3);
    let results = [
        sample_mean_check("video interarrival", n, 6.0, 12.5, 0.02, || ia.sample(&mut r1)),
        sample_mean_check("video size", n, 100.0, 250.0, 0.02, || sz.sample(&mut r2)),
        sample_mean_check("VoNR interarrival", n, 80.0, 160.0, 0.02, || vonr.sample(&mut r3)),
    ];
    let ok = results.iter().all(|r| r.is_ok());
    let lines = results.into_iter().map(|r| r.unwrap_or_else(|e| e)).collect();
    if ok {
        Ok(lines)
    } else {
        Err(lines)
    }
}

// ---------------------------------------------------------------------------
// Reward
// ---------------------------------------------------------------------------

use tl_slicing::env::compute_reward;

pub fn reward_at_inflection() -> Check {
    let cfg = EnvConfig::table_defaults();
    let l: Vec<f64> = cfg.slices.iter().map(|s| s.c2).collect();
    let r = compute_reward(&l, &cfg.slices);
    if (r - 0.5).abs() <= 1e-12 {
        Ok(format!("R(l = c2) = {r:.17}"))
    } else {
        Err(format!("R(l = c2) = {r:.17}, expected 0.5"))
    }
}

/// Upper end of the latency range where a slice's sigmoid term is still
/// above ~3e-7, so a small latency increase changes R by more than an ulp.
/// Far past it the term underflows relative to the sum and R stays flat.
pub fn sensitive_latency_max(c1: f64, c2: f64) -> f64 {
    c2 + 15.0 / c1
}

/// Raising any one slice's latency strictly lowers the reward.
pub fn reward_monotone(checks: usize, seed: u64) -> Check {
    let cfg = EnvConfig::table_defaults();
    let mut rng = seeding::rng(seed, 0);
    for i in 0..checks {
        let l: Vec<f64> = cfg
            .slices
            .iter()
            .map(|s| rng.random_range(0.0..sensitive_latency_max(s.c1, s.c2)))
            .collect();
        let s = rng.random_range(0..l.len());
        let mut l2 = l.clone();
        l2[s] += rng.random_range(0.01..10.0);
        let (a, b) = (compute_reward(&l, &cfg.slices), compute_reward(&l2, &cfg.slices));
        if b >= a {
            return Err(format!("check {i}: R({l:?}) = {a} but R({l2:?}) = {b}"));
        }
    }
    Ok(format!("{checks} randomized latency increases all lowered R"))
}

// ---------------------------------------------------------------------------
// Transfer
// ---------------------------------------------------------------------------

use tl_slicing::env::enumerate_action_space;
use tl_slicing::harness::{run_loop, train_expert, RunConfig};
use tl_slicing::transfer::{distill_action, gpi_from_preferences, TransferConfig, TransferMode};

pub fn small_run_config(steps: u64) -> RunConfig {
    let mut cfg = RunConfig::defaults();
    cfg.total_steps = steps;
    cfg
}

fn actions_of(cfg: &RunConfig, t: &TransferConfig, experts: &[PolicyWeights], seed: u64) -> Vec<usize> {
    run_loop(cfg, t, experts, seed).unwrap().records.iter().map(|r| r.action).collect()
}

/// The four exact equivalences of the transfer controller on full runs.
pub fn transfer_equivalences(steps: u64, seed: u64) -> Result<Vec<String>, Vec<String>> {
    let cfg = small_run_config(steps);
    let experts = vec![
        train_expert(&cfg, 101).unwrap().record.policy_weights().unwrap(),
        train_expert(&cfg, 102).unwrap().record.policy_weights().unwrap(),
    ];
    let base = TransferConfig {
        mode: TransferMode::Reuse,
        theta: 0.8,
        nu: 0.999,
        duration: steps / 2,
        gamma: 0.5,
    };
    let with = |mode, f: &dyn Fn(&mut TransferConfig)| {
        let mut t = TransferConfig { mode, ..base.clone() };
        f(&mut t);
        actions_of(&cfg, &t, &experts, seed)
    };
    let reuse = with(TransferMode::Reuse, &|_| {});
    let distill = with(TransferMode::Distill, &|_| {});
    let none = with(TransferMode::None, &|_| {});
    let cases = [
        ("hybrid(gamma=1) == reuse", with(TransferMode::Hybrid, &|t| t.gamma = 1.0), reuse.clone()),
        ("hybrid(gamma=0) == distill", with(TransferMode::Hybrid, &|t| t.gamma = 0.0), distill.clone()),
        ("reuse(theta=0) == none", with(TransferMode::Reuse, &|t| t.theta = 0.0), none.clone()),
        ("hybrid(theta=0) == none", with(TransferMode::Hybrid, &|t| t.theta = 0.0), none.clone()),
        ("reuse(T=0) == plain learner", with(TransferMode::Reuse, &|t| t.duration = 0), none.clone()),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, a, b) in cases {
        let eq = a == b;
        ok &= eq;
        let first_diff = a.iter().zip(&b).position(|(x, y)| x != y);
        lines.push(match first_diff {
            None if eq => format!("{name}: {} actions identical", a.len()),
            _ => format!("{name}: differs at step {first_diff:?}"),
        });
    }
    // the equivalences are not vacuous: transfer changes the trajectory
    let differs = reuse != none && distill != none && reuse != distill;
    ok &= differs;
    lines.push(format!("reuse, distill and none trajectories pairwise distinct: {differs}"));
    if ok {
        Ok(lines)
    } else {
        Err(lines)
    }
}

/// `distill_action` against the float brute force on random pairs plus the
/// documented tie case.
pub fn distill_matches_brute_force(pairs: usize, seed: u64) -> Check {
    let space = enumerate_action_space(3, 0.1, 0.1).unwrap();
    let id = |s: [f64; 3]| {
        space
            .iter()
            .position(|a| a.shares.iter().zip(s).all(|(x, y)| (x - y).abs() < 1e-9))
            .unwrap()
    };
    // midpoint (0.45, 0.25, 0.3) is equidistant from (0.4, 0.3, 0.3) and (0.5, 0.2, 0.3)
    let tie = (id([0.6, 0.2, 0.2]), id([0.3, 0.3, 0.4]));
    let want_tie = id([0.4, 0.3, 0.3]);
    if distill_action(tie.0, tie.1, &space) != want_tie {
        return Err("tie case did not resolve to the lowest id".into());
    }
    let mut rng = seeding::rng(seed, 0);
    let mut ties = 0;
    for i in 0..pairs {
        let (e, l) = (rng.random_range(0..space.len()), rng.random_range(0..space.len()));
        let (got, want) = (distill_action(e, l, &space), distill_brute_force(e, l, &space));
        if got != want {
            return Err(format!("pair {i} ({e}, {l}): distill {got}, brute force {want}"));
        }
        let ue = &space.allocations()[e].units;
        let ul = &space.allocations()[l].units;
        if ue.iter().zip(ul).any(|(a, b)| (a + b) % 2 == 1) {
            ties += 1;
        }
    }
    Ok(format!("{pairs} random pairs + tie case agree ({ties} pairs with off-grid midpoints)"))
}

pub fn gpi_matches_exhaustive(tables: usize, seed: u64) -> Check {
    let mut rng = seeding::rng(seed, 0);
    for i in 0..tables {
        let experts = rng.random_range(1..5);
        let actions = rng.random_range(1..40);
        // coarse values make cross-expert ties common
        let prefs: Vec<Vec<f64>> = (0..experts)
            .map(|_| (0..actions).map(|_| rng.random_range(0..8) as f64 * 0.25).collect())
            .collect();
        let got = gpi_from_preferences(&prefs).map_err(|e| e.to_string())?;
        let want = gpi_brute_force(&prefs);
        if got != want {
            return Err(format!("table {i}: gpi {got}, exhaustive {want}"));
        }
    }
    Ok(format!("{tables} random logit tables agree"))
}
