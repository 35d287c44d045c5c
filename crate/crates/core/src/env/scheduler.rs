//! Per-slot round-robin scheduling inside each slice for one slicing window.

use std::collections::VecDeque;

use crate::traffic::Packet;

/// Per-user FIFO queues of one slice plus the round-robin cursor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceQueues {
    users: Vec<VecDeque<Packet>>,
    /// User whose head-of-line packet is served next.
    rr_next: usize,
    backlog_packets: usize,
}

impl SliceQueues {
    pub fn push(&mut self, packet: Packet) {
        if packet.user_id >= self.users.len() {
            self.users.resize_with(packet.user_id + 1, VecDeque::new);
        }
        self.users[packet.user_id].push_back(packet);
        self.backlog_packets += 1;
    }

    pub fn pending_packets(&self) -> usize {
        self.backlog_packets
    }

    pub fn pending_bytes(&self) -> u64 {
        self.packets().map(|p| p.remaining as u64).sum()
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.users.iter().flatten()
    }

    pub fn user_queue(&self, user: usize) -> Option<&VecDeque<Packet>> {
        self.users.get(user)
    }

    pub fn num_user_slots(&self) -> usize {
        self.users.len()
    }

    pub fn rr_cursor(&self) -> usize {
        self.rr_next
    }

    /// Removes every pending packet of `user`; returns the dropped byte count.
    pub fn drop_user(&mut self, user: usize) -> u64 {
        match self.users.get_mut(user) {
            Some(q) => {
                self.backlog_packets -= q.len();
                q.drain(..).map(|p| p.remaining as u64).sum()
            }
            None => 0,
        }
    }

    /// Serves up to `budget` bytes in slot `slot`, round-robin over users with
    /// backlog. Each turn serves one head-of-line packet; a packet that only
    /// partially fits keeps its residual and the cursor stays on its user.
    fn serve_slot(&mut self, slot: u64, mut budget: u64, done: &mut impl FnMut(u64)) -> u64 {
        let mut served = 0;
        let n = self.users.len();
        while budget > 0 && self.backlog_packets > 0 {
            let mut u = self.rr_next % n;
            while self.users[u].is_empty() {
                u = (u + 1) % n;
            }
            let head = self.users[u].front_mut().expect("non-empty");
            let take = budget.min(head.remaining as u64);
            head.remaining -= take as u32;
            budget -= take;
            served += take;
            if head.remaining == 0 {
                let p = self.users[u].pop_front().expect("non-empty");
                self.backlog_packets -= 1;
                done(slot - p.arrival_slot + 1);
                self.rr_next = (u + 1) % n;
            } else {
                self.rr_next = u;
            }
        }
        served
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceKpis {
    /// Mean over completed-packet latencies and pending-packet ages (ms).
    pub avg_latency_ms: f64,
    pub packets_served: u64,
    pub packets_pending: u64,
    pub bytes_served: u64,
    pub bytes_pending: u64,
    /// Bytes that arrived during the window (`D_s`).
    pub demand_bytes: u64,
    /// Bytes removed with departing users at the window end.
    pub bytes_dropped: u64,
    pub users_departed: u32,
    pub budget_per_slot: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowKpis {
    pub slices: Vec<SliceKpis>,
    pub reward: f64,
}

impl WindowKpis {
    pub fn latencies(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.avg_latency_ms).collect()
    }

    pub fn demands(&self) -> Vec<u64> {
        self.slices.iter().map(|s| s.demand_bytes).collect()
    }
}

/// Byte budget per slot for a share of the total capacity.
pub fn slot_budget(share: f64, total_capacity: u64) -> u64 {
    (share * total_capacity as f64 + 1e-9).floor() as u64
}

/// Runs `window_len` one-millisecond slots starting at `window_start`.
///
/// `arrivals[s]` must be sorted by arrival slot and lie inside the window.
/// Returns per-slice KPIs (reward is filled in by the caller).
pub fn simulate_window(
    queues: &mut [SliceQueues],
    arrivals: &[Vec<Packet>],
    shares: &[f64],
    total_capacity: u64,
    window_start: u64,
    window_len: u64,
) -> Vec<SliceKpis> {
    assert_eq!(queues.len(), arrivals.len());
    assert_eq!(queues.len(), shares.len());
    let window_end = window_start + window_len;
    let mut out = Vec::with_capacity(queues.len());

    for ((q, arr), &share) in queues.iter_mut().zip(arrivals).zip(shares) {
        let budget = slot_budget(share, total_capacity);
        let mut k = SliceKpis {
            budget_per_slot: budget,
            demand_bytes: arr.iter().map(|p| p.size as u64).sum(),
            ..Default::default()
        };
        let mut latency_sum = 0u64;
        let mut next_arrival = 0;
        for slot in window_start..window_end {
            while next_arrival < arr.len() && arr[next_arrival].arrival_slot == slot {
                q.push(arr[next_arrival]);
                next_arrival += 1;
            }
            let mut done = |lat: u64| {
                latency_sum += lat;
                k.packets_served += 1;
            };
            k.bytes_served += q.serve_slot(slot, budget, &mut done);
        }
        debug_assert_eq!(next_arrival, arr.len(), "arrival outside window");

        let mut age_sum = 0u64;
        for p in q.packets() {
            age_sum += window_end - p.arrival_slot;
            k.bytes_pending += p.remaining as u64;
        }
        k.packets_pending = q.pending_packets() as u64;
        let counted = k.packets_served + k.packets_pending;
        k.avg_latency_ms = if counted == 0 {
            0.0
        } else {
            (latency_sum + age_sum) as f64 / counted as f64
        };
        out.push(k);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(slot: u64, size: u32, user: usize) -> Packet {
        Packet::new(slot, size, user, 0)
    }

    #[test]
    fn single_packet_served_in_its_slot() {
        let mut q = vec![SliceQueues::default()];
        let k = simulate_window(&mut q, &[vec![pkt(0, 40, 0)]], &[1.0], 40, 0, 100);
        assert_eq!(k[0].packets_served, 1);
        assert_eq!(k[0].avg_latency_ms, 1.0);
    }

    #[test]
    fn fifo_one_packet_per_slot() {
        let mut q = vec![SliceQueues::default()];
        let k = simulate_window(
            &mut q,
            &[vec![pkt(0, 40, 0), pkt(0, 40, 0)]],
            &[1.0],
            40,
            0,
            100,
        );
        assert_eq!(k[0].packets_served, 2);
        assert_eq!(k[0].avg_latency_ms, 1.5);
    }

    #[test]
    fn residual_budget_rolls_to_next_user() {
        let mut q = vec![SliceQueues::default()];
        // 100 B/slot: user 0's 60 B packet then 40 B of user 1's 70 B packet.
        let k = simulate_window(
            &mut q,
            &[vec![pkt(0, 60, 0), pkt(0, 70, 1)]],
            &[1.0],
            100,
            0,
            2,
        );
        assert_eq!(k[0].bytes_served, 130);
        // latencies: 1 (user 0), 2 (user 1)
        assert_eq!(k[0].avg_latency_ms, 1.5);
    }

    #[test]
    fn pending_ages_count_toward_latency() {
        let mut q = vec![SliceQueues::default()];
        let k = simulate_window(&mut q, &[vec![pkt(0, 500, 0)]], &[1.0], 100, 0, 3);
        assert_eq!(k[0].packets_served, 0);
        assert_eq!(k[0].packets_pending, 1);
        assert_eq!(k[0].bytes_pending, 200);
        assert_eq!(k[0].avg_latency_ms, 3.0);
        // continues next window with its residual
        let k = simulate_window(&mut q, &[vec![]], &[1.0], 100, 3, 3);
        assert_eq!(k[0].packets_served, 1);
        assert_eq!(k[0].avg_latency_ms, 5.0);
    }

    #[test]
    fn empty_slice_reports_zero_latency() {
        let mut q = vec![SliceQueues::default()];
        let k = simulate_window(&mut q, &[vec![]], &[0.5], 100, 0, 10);
        assert_eq!(k[0].avg_latency_ms, 0.0);
    }

    #[test]
    fn zero_budget_serves_nothing() {
        let mut q = vec![SliceQueues::default()];
        let k = simulate_window(&mut q, &[vec![pkt(0, 1, 0)]], &[0.001], 100, 0, 10);
        assert_eq!(k[0].budget_per_slot, 0);
        assert_eq!(k[0].bytes_served, 0);
    }

    #[test]
    fn drop_user_returns_remaining_bytes() {
        let mut q = SliceQueues::default();
        q.push(pkt(0, 10, 2));
        q.push(pkt(1, 15, 2));
        q.push(pkt(1, 5, 0));
        assert_eq!(q.drop_user(2), 25);
        assert_eq!(q.pending_packets(), 1);
        assert_eq!(q.drop_user(9), 0);
    }
}
