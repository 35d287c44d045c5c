//! PPO clipped-surrogate update with plain gradient descent.

use serde::{Deserialize, Serialize};

use super::explore::mixed_prob;
use super::network::PolicyWeights;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyperparams {
    pub learning_rate: f64,
    /// Transitions per update (β).
    pub batch_size: usize,
    pub clip_ratio: f64,
    /// Discount factor λ.
    pub discount: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs_per_update: usize,
}

impl Default for PpoHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 4,
            clip_ratio: 0.2,
            discount: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            epochs_per_update: 3,
        }
    }
}

impl PpoHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0)
            || self.batch_size == 0
            || !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0)
            || !(self.discount > 0.0 && self.discount <= 1.0)
        {
            return Err(Error::Config(format!("invalid PPO hyper-parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    /// Log-probability of `action` under the learner's ε-mixed distribution
    /// at selection time.
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// Exploration rate in force when the action was selected.
    pub epsilon: f64,
}

/// Fixed-capacity transition buffer, flushed when full.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Value estimate of the state following the last transition.
    pub bootstrap_value: Option<f64>,
}

impl TransitionBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
            bootstrap_value: None,
        }
    }

    /// Appends; returns true when the buffer became full.
    pub fn push(&mut self, t: Transition) -> bool {
        debug_assert!(self.items.len() < self.capacity);
        self.items.push(t);
        self.is_full()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Transition] {
        &self.items
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.bootstrap_value = None;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Discounted returns-to-go and (centered when more than one) advantages.
pub fn returns_and_advantages(buffer: &[Transition], bootstrap: Option<f64>, discount: f64) -> (Vec<f64>, Vec<f64>) {
    let mut returns = vec![0.0; buffer.len()];
    let mut g = bootstrap.unwrap_or(0.0);
    for (i, t) in buffer.iter().enumerate().rev() {
        g = t.reward + discount * g;
        returns[i] = g;
    }
    let mut adv: Vec<f64> = returns.iter().zip(buffer).map(|(g, t)| g - t.value).collect();
    if adv.len() > 1 {
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        for a in &mut adv {
            *a -= mean;
        }
    }
    (returns, adv)
}

/// Total PPO loss of `weights` on the buffer and its gradient.
pub fn ppo_loss_and_grad(
    weights: &PolicyWeights,
    buffer: &[Transition],
    returns: &[f64],
    advantages: &[f64],
    hyper: &PpoHyperparams,
) -> Result<(LossReport, Vec<f64>)> {
    let n = buffer.len() as f64;
    let eps_clip = hyper.clip_ratio;
    let mut grad = vec![0.0; weights.params.len()];
    let mut report = LossReport::default();

    for ((t, &ret), &adv) in buffer.iter().zip(returns).zip(advantages) {
        let f = weights.forward(&t.state)?;
        let p = &f.probs;
        let a = t.action;
        let pm = mixed_prob(p, a, t.epsilon);
        let ratio = (pm.ln() - t.log_prob).exp();
        let clipped = ratio.clamp(1.0 - eps_clip, 1.0 + eps_clip);
        let unclipped_obj = ratio * adv;
        let clipped_obj = clipped * adv;
        report.policy -= unclipped_obj.min(clipped_obj) / n;

        let entropy: f64 = -p.iter().map(|&q| if q > 0.0 { q * q.ln() } else { 0.0 }).sum::<f64>();
        report.entropy += entropy / n;
        let v_err = f.value - ret;
        report.value += v_err * v_err / n;

        let mut dlogits = vec![0.0; p.len()];
        // policy term: only the unclipped branch carries gradient
        if unclipped_obj <= clipped_obj {
            // d log pm / d z_j = (1 - ε) p_a (δ_aj - p_j) / pm
            let scale = -adv * ratio * (1.0 - t.epsilon) * p[a] / pm / n;
            for (j, d) in dlogits.iter_mut().enumerate() {
                *d += scale * (if j == a { 1.0 } else { 0.0 } - p[j]);
            }
        }
        // entropy bonus: d(-c_e H)/d z_j = c_e p_j (ln p_j + H)
        for (j, d) in dlogits.iter_mut().enumerate() {
            if p[j] > 0.0 {
                *d += hyper.entropy_coef * p[j] * (p[j].ln() + entropy) / n;
            }
        }
        let dvalue = hyper.value_coef * 2.0 * v_err / n;
        weights.backward(&f, &dlogits, dvalue, &mut grad);
    }
    report.total = report.policy + hyper.value_coef * report.value - hyper.entropy_coef * report.entropy;
    if !report.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite PPO loss {report:?}")));
    }
    Ok((report, grad))
}

/// Runs `epochs_per_update` full-batch gradient-descent steps on the buffer.
/// Returns the loss measured before the first step.
pub fn ppo_update(
    weights: &PolicyWeights,
    buffer: &TransitionBuffer,
    hyper: &PpoHyperparams,
) -> Result<(PolicyWeights, LossReport)> {
    let items = buffer.items();
    let (returns, adv) = returns_and_advantages(items, buffer.bootstrap_value, hyper.discount);
    let mut w = weights.clone();
    let mut first = None;
    for _ in 0..hyper.epochs_per_update {
        let (report, grad) = ppo_loss_and_grad(&w, items, &returns, &adv, hyper)?;
        first.get_or_insert(report);
        if hyper.learning_rate != 0.0 {
            for (p, g) in w.params.iter_mut().zip(&grad) {
                *p -= hyper.learning_rate * g;
            }
        }
    }
    Ok((w, first.unwrap_or_default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::network::{Architecture, Role};
    use crate::seeding;
    use rand::Rng;

    fn tiny(seed: u64) -> PolicyWeights {
        let mut rng = seeding::rng(seed, 9);
        PolicyWeights::random(Architecture::new(3, vec![4], 6), Role::Learner, &mut rng)
    }

    fn transition(w: &PolicyWeights, state: Vec<f64>, action: usize, reward: f64) -> Transition {
        let f = w.forward(&state).unwrap();
        Transition {
            log_prob: f.probs[action].ln(),
            value: f.value,
            state,
            action,
            reward,
            epsilon: 0.0,
        }
    }

    #[test]
    fn returns_are_discounted_and_bootstrapped() {
        let mk = |r| Transition { state: vec![], action: 0, log_prob: 0.0, reward: r, value: 0.0, epsilon: 0.0 };
        let b = vec![mk(1.0), mk(2.0)];
        let (ret, adv) = returns_and_advantages(&b, Some(10.0), 0.5);
        assert_eq!(ret, vec![1.0 + 0.5 * (2.0 + 0.5 * 10.0), 2.0 + 5.0]);
        assert!((adv.iter().sum::<f64>()).abs() < 1e-12);
        let (ret, _) = returns_and_advantages(&b, None, 0.5);
        assert_eq!(ret, vec![2.0, 2.0]);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let w = tiny(1);
        let mut buf = TransitionBuffer::new(4);
        for i in 0..4 {
            buf.push(transition(&w, vec![0.1 * i as f64, 0.5, 0.2], i, i as f64));
        }
        let hyper = PpoHyperparams { learning_rate: 0.0, ..Default::default() };
        let (w2, _) = ppo_update(&w, &buf, &hyper).unwrap();
        assert_eq!(w2, w);
    }

    #[test]
    fn update_is_deterministic() {
        let w = tiny(2);
        let mut buf = TransitionBuffer::new(4);
        for i in 0..4 {
            buf.push(transition(&w, vec![0.3, 0.1 * i as f64, 0.6], 5 - i, 0.3 * i as f64));
        }
        let h = PpoHyperparams::default();
        assert_eq!(ppo_update(&w, &buf, &h).unwrap().0, ppo_update(&w, &buf, &h).unwrap().0);
    }

    #[test]
    fn positive_advantage_raises_action_probability() {
        let w = tiny(3);
        let s = vec![0.2, 0.7, 0.1];
        let mut t = transition(&w, s.clone(), 2, 1.0);
        t.value = 0.0; // advantage = 1 for a single transition
        let mut buf = TransitionBuffer::new(1);
        buf.push(t);
        let hyper = PpoHyperparams { learning_rate: 1e-3, entropy_coef: 0.0, ..Default::default() };
        let before = w.forward(&s).unwrap().probs[2];
        let (w2, _) = ppo_update(&w, &buf, &hyper).unwrap();
        let after = w2.forward(&s).unwrap().probs[2];
        assert!(after > before, "{after} <= {before}");
    }

    #[test]
    fn zero_advantage_leaves_only_value_and_entropy() {
        let w = tiny(4);
        let s = vec![0.2, 0.7, 0.1];
        let mut t = transition(&w, s, 1, 0.0);
        t.value = 0.0;
        let (ret, adv) = returns_and_advantages(std::slice::from_ref(&t), None, 0.95);
        assert_eq!(adv, vec![0.0]);
        let h = PpoHyperparams::default();
        let (rep, _) = ppo_loss_and_grad(&w, &[t], &ret, &adv, &h).unwrap();
        assert_eq!(rep.policy, 0.0);
    }

    #[test]
    fn clipped_sample_has_no_policy_gradient() {
        let w = tiny(5);
        let s = vec![0.4, 0.4, 0.2];
        let mut t = transition(&w, s, 3, 0.0);
        // pretend the old probability was much smaller: ratio >> 1 + clip
        t.log_prob -= 1.0;
        let h = PpoHyperparams { entropy_coef: 0.0, value_coef: 0.0, ..Default::default() };
        let (_, grad) = ppo_loss_and_grad(&w, &[t], &[0.0], &[1.5], &h).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn entropy_bounds() {
        let mut rng = seeding::rng(6, 0);
        for _ in 0..200 {
            let mut w = tiny(rng.random());
            for p in &mut w.params {
                *p *= 10.0;
            }
            let s: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let t = transition(&w, s, 0, 0.0);
            let h = PpoHyperparams::default();
            let (rep, _) = ppo_loss_and_grad(&w, &[t], &[0.0], &[0.0], &h).unwrap();
            assert!(rep.entropy >= 0.0 && rep.entropy <= (6f64).ln() + 1e-12);
        }
    }
}
