//! Content delivery management: neighbour ranking, caches with sharing timeouts,
//! the pending-request ledger, and the D2D/I2D delivery decisions.
//!
//! One global agent keeps a partitioned view per base station. A node's cache and
//! pending requests live in the view of the site it is associated with and move on
//! handover; lookups of other nodes go through the association map.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BsId, ContentId, Mode, NodeId, Position, RequestId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdmsParams {
    pub mode: Mode,
    pub d_max: f64,
    pub content_timeout: f64,
    pub sharing_timeout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Neighbor {
    pub id: NodeId,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct NodeState {
    pub position: Position,
    /// Content id to sharing-timeout expiry.
    pub cache: BTreeMap<ContentId, f64>,
    /// Ranked best first.
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PendingState {
    /// Waiting for a holder to come in range, or for the timeout.
    Waiting,
    D2d { source: NodeId },
    I2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PendingEntry {
    pub request: RequestId,
    pub t_req: f64,
    pub timeout_at: f64,
    pub state: PendingState,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BsView {
    pub nodes: BTreeMap<NodeId, NodeState>,
    pub pending: BTreeMap<(NodeId, ContentId), PendingEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Disposition {
    /// Content already cached: dropped, sharing timeout restarted.
    DiscardedRepeat,
    /// Same content already pending or in flight for this node.
    Merged,
    /// Registered; nothing in range yet.
    Pending { timeout_at: f64 },
    /// A neighbour holds it: send from `source` in the next CI.
    D2dTriggered { source: NodeId, timeout_at: f64 },
    /// Benchmark mode: the base station sends it in the next CI.
    I2dImmediate { bs: BsId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct D2dTrigger {
    pub request: RequestId,
    pub node: NodeId,
    pub content: ContentId,
    pub source: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct I2dDelivery {
    pub request: RequestId,
    pub node: NodeId,
    pub content: ContentId,
    pub bs: BsId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cdms {
    pub params: CdmsParams,
    views: BTreeMap<BsId, BsView>,
    assoc: BTreeMap<NodeId, BsId>,
}

impl Cdms {
    pub fn new(params: CdmsParams) -> Self {
        Cdms {
            params,
            views: BTreeMap::new(),
            assoc: BTreeMap::new(),
        }
    }

    pub fn association(&self, k: NodeId) -> Option<BsId> {
        self.assoc.get(&k).copied()
    }

    pub fn view(&self, bs: BsId) -> Option<&BsView> {
        self.views.get(&bs)
    }

    pub fn node(&self, k: NodeId) -> Option<&NodeState> {
        let bs = self.assoc.get(&k)?;
        self.views.get(bs)?.nodes.get(&k)
    }

    fn node_mut(&mut self, k: NodeId) -> Result<&mut NodeState> {
        let bs = *self.assoc.get(&k).ok_or(Error::UnknownNode(k))?;
        self.views
            .get_mut(&bs)
            .and_then(|v| v.nodes.get_mut(&k))
            .ok_or(Error::UnknownNode(k))
    }

    fn view_of_mut(&mut self, k: NodeId) -> Result<&mut BsView> {
        let bs = *self.assoc.get(&k).ok_or(Error::UnknownNode(k))?;
        Ok(self.views.entry(bs).or_default())
    }

    pub fn contains(&self, k: NodeId) -> bool {
        self.assoc.contains_key(&k)
    }

    pub fn add_node(&mut self, k: NodeId, position: Position, bs: BsId) {
        self.assoc.insert(k, bs);
        self.views.entry(bs).or_default().nodes.insert(
            k,
            NodeState {
                position,
                ..NodeState::default()
            },
        );
    }

    /// Node leaves the region. Returns its pending requests, which are cancelled.
    pub fn remove_node(&mut self, k: NodeId) -> Vec<(ContentId, PendingEntry)> {
        let Some(bs) = self.assoc.remove(&k) else {
            return Vec::new();
        };
        let view = self.views.entry(bs).or_default();
        view.nodes.remove(&k);
        let keys: Vec<_> = view.pending.range((k, 0)..=(k, ContentId::MAX)).map(|(key, _)| *key).collect();
        keys.into_iter()
            .filter_map(|key| view.pending.remove(&key).map(|e| (key.1, e)))
            .collect()
    }

    /// Moves `k`'s cache index and pending requests from one site's view to another.
    pub fn handover(&mut self, k: NodeId, old_bs: BsId, new_bs: BsId) -> Result<()> {
        if old_bs == new_bs {
            return Ok(());
        }
        if self.assoc.get(&k) != Some(&old_bs) {
            return Err(Error::Logic(format!("node {k} is not associated with site {old_bs}")));
        }
        let old = self.views.entry(old_bs).or_default();
        let state = old.nodes.remove(&k).ok_or(Error::UnknownNode(k))?;
        let keys: Vec<_> = old.pending.range((k, 0)..=(k, ContentId::MAX)).map(|(key, _)| *key).collect();
        let moved: Vec<_> = keys.into_iter().filter_map(|key| old.pending.remove(&key).map(|e| (key, e))).collect();
        let new = self.views.entry(new_bs).or_default();
        new.nodes.insert(k, state);
        new.pending.extend(moved);
        self.assoc.insert(k, new_bs);
        Ok(())
    }

    /// True when `j` holds `z` with an unexpired sharing timeout at `t`.
    pub fn holds(&self, j: NodeId, z: ContentId, t: f64) -> bool {
        self.node(j).and_then(|n| n.cache.get(&z)).is_some_and(|&exp| exp > t)
    }

    pub fn pending(&self, k: NodeId, z: ContentId) -> Option<&PendingEntry> {
        let bs = self.assoc.get(&k)?;
        self.views.get(bs)?.pending.get(&(k, z))
    }

    fn pending_mut(&mut self, k: NodeId, z: ContentId) -> Option<&mut PendingEntry> {
        let bs = *self.assoc.get(&k)?;
        self.views.get_mut(&bs)?.pending.get_mut(&(k, z))
    }

    /// Highest-ranked neighbour of `k` currently holding `z`.
    pub fn best_source(&self, k: NodeId, z: ContentId, t: f64) -> Option<NodeId> {
        self.node(k)?
            .neighbors
            .iter()
            .map(|n| n.id)
            .find(|&j| self.holds(j, z, t))
    }

    pub fn handle_request(&mut self, k: NodeId, z: ContentId, t: f64, request: RequestId) -> Result<Disposition> {
        let tau_s = self.params.sharing_timeout;
        let node = self.node_mut(k)?;
        if let Some(exp) = node.cache.get_mut(&z) {
            if *exp > t {
                *exp = t + tau_s;
                return Ok(Disposition::DiscardedRepeat);
            }
        }
        if self.pending(k, z).is_some() {
            return Ok(Disposition::Merged);
        }
        let bs = self.assoc[&k];
        let (timeout_at, state, disp) = match self.params.mode {
            Mode::BenchmarkI2dOnly => (t, PendingState::I2d, Disposition::I2dImmediate { bs }),
            Mode::Offloading => {
                let timeout_at = t + self.params.content_timeout;
                match self.best_source(k, z, t) {
                    Some(source) => (
                        timeout_at,
                        PendingState::D2d { source },
                        Disposition::D2dTriggered { source, timeout_at },
                    ),
                    None => (timeout_at, PendingState::Waiting, Disposition::Pending { timeout_at }),
                }
            }
        };
        self.view_of_mut(k)?.pending.insert(
            (k, z),
            PendingEntry {
                request,
                t_req: t,
                timeout_at,
                state,
            },
        );
        Ok(disp)
    }

    /// Case-2 scan: every waiting request whose node now has a holder in range.
    pub fn on_ci_tick_scan(&mut self, t: f64) -> Vec<D2dTrigger> {
        if self.params.mode != Mode::Offloading {
            return Vec::new();
        }
        let mut waiting: Vec<(NodeId, ContentId, RequestId)> = Vec::new();
        for v in self.views.values() {
            for (&(k, z), e) in &v.pending {
                if e.state == PendingState::Waiting {
                    waiting.push((k, z, e.request));
                }
            }
        }
        waiting.sort_unstable();
        let mut out = Vec::new();
        for (k, z, request) in waiting {
            if let Some(source) = self.best_source(k, z, t) {
                if let Some(e) = self.pending_mut(k, z) {
                    e.state = PendingState::D2d { source };
                }
                out.push(D2dTrigger {
                    request,
                    node: k,
                    content: z,
                    source,
                });
            }
        }
        out
    }

    /// Content timeout of `request`. Sends from the base station unless the request was
    /// served meanwhile or a D2D attempt is under way.
    pub fn on_content_timeout(&mut self, k: NodeId, z: ContentId, request: RequestId) -> Option<I2dDelivery> {
        let bs = self.association(k)?;
        let e = self.pending_mut(k, z)?;
        if e.request != request || e.state != PendingState::Waiting {
            return None;
        }
        e.state = PendingState::I2d;
        Some(I2dDelivery {
            request,
            node: k,
            content: z,
            bs,
        })
    }

    /// A D2D attempt was abandoned (source gone or retries exhausted). The request waits
    /// again, or goes to the base station at once if its timeout has passed.
    pub fn abort_d2d(&mut self, k: NodeId, z: ContentId, t: f64) -> Option<I2dDelivery> {
        let bs = self.association(k)?;
        let e = self.pending_mut(k, z)?;
        if !matches!(e.state, PendingState::D2d { .. }) {
            return None;
        }
        if t >= e.timeout_at {
            e.state = PendingState::I2d;
            Some(I2dDelivery {
                request: e.request,
                node: k,
                content: z,
                bs,
            })
        } else {
            e.state = PendingState::Waiting;
            None
        }
    }

    /// Delivery acknowledged: the content enters `k`'s cache and the request leaves the ledger.
    pub fn deliver(&mut self, k: NodeId, z: ContentId, t: f64) -> Result<Option<PendingEntry>> {
        let tau_s = self.params.sharing_timeout;
        self.node_mut(k)?.cache.insert(z, t + tau_s);
        Ok(self.view_of_mut(k)?.pending.remove(&(k, z)))
    }

    /// Gives up on a request entirely.
    pub fn drop_request(&mut self, k: NodeId, z: ContentId) -> Option<PendingEntry> {
        self.view_of_mut(k).ok()?.pending.remove(&(k, z))
    }

    /// Removes cache entries whose sharing timeout has passed.
    pub fn expire_caches(&mut self, t: f64) {
        for v in self.views.values_mut() {
            for n in v.nodes.values_mut() {
                n.cache.retain(|_, &mut exp| exp > t);
            }
        }
    }

    /// Updates positions and associations (handing over as needed), then rebuilds every
    /// neighbour list: nodes within `d_max`, ranked by descending gain, ties to lower id.
    pub fn refresh(
        &mut self,
        positions: &[(NodeId, Position, BsId)],
        gain: impl Fn(Position, Position) -> f64,
    ) -> Result<()> {
        for &(k, p, bs) in positions {
            let old = *self.assoc.get(&k).ok_or(Error::UnknownNode(k))?;
            if old != bs {
                self.handover(k, old, bs)?;
            }
            self.node_mut(k)?.position = p;
        }
        let d_max = self.params.d_max;
        let lists: Vec<(NodeId, Vec<Neighbor>)> = positions
            .iter()
            .map(|&(k, p, _)| {
                let mut nb: Vec<Neighbor> = positions
                    .iter()
                    .filter(|&&(j, q, _)| j != k && p.distance(&q) <= d_max)
                    .map(|&(j, q, _)| Neighbor { id: j, gain: gain(q, p) })
                    .collect();
                nb.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.id.cmp(&b.id)));
                (k, nb)
            })
            .collect();
        for (k, nb) in lists {
            self.node_mut(k)?.neighbors = nb;
        }
        Ok(())
    }

    /// All pending entries across views, ordered by (node, content).
    pub fn all_pending(&self) -> Vec<((NodeId, ContentId), PendingEntry)> {
        let mut v: Vec<_> = self.views.values().flat_map(|v| v.pending.iter().map(|(k, e)| (*k, *e))).collect();
        v.sort_by_key(|x| x.0);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> CdmsParams {
        CdmsParams {
            mode: Mode::Offloading,
            d_max: 100.0,
            content_timeout: 20.0,
            sharing_timeout: 60.0,
        }
    }

    fn gain(a: Position, b: Position) -> f64 {
        1.0 / (1.0 + a.distance(&b))
    }

    fn setup(nodes: &[(NodeId, f64)]) -> Cdms {
        let mut c = Cdms::new(params());
        let pos: Vec<_> = nodes.iter().map(|&(k, x)| (k, Position::new(x, 0.0), 0)).collect();
        for &(k, p, b) in &pos {
            c.add_node(k, p, b);
        }
        c.refresh(&pos, gain).unwrap();
        c
    }

    #[test]
    fn own_cache_hit_is_discarded_and_resets_timeout() {
        let mut c = setup(&[(1, 0.0)]);
        c.deliver(1, 5, 0.0).unwrap();
        assert_eq!(c.handle_request(1, 5, 30.0, 9).unwrap(), Disposition::DiscardedRepeat);
        assert_eq!(c.node(1).unwrap().cache[&5], 90.0);
    }

    #[test]
    fn single_holder_in_range_triggers_d2d() {
        let mut c = setup(&[(1, 0.0), (2, 50.0)]);
        c.deliver(2, 7, 0.0).unwrap();
        let d = c.handle_request(1, 7, 1.0, 0).unwrap();
        assert_eq!(d, Disposition::D2dTriggered { source: 2, timeout_at: 21.0 });
        assert_eq!(c.handle_request(1, 7, 2.0, 1).unwrap(), Disposition::Merged);
        // In-flight D2D suppresses the timeout.
        assert_eq!(c.on_content_timeout(1, 7, 0), None);
    }

    #[test]
    fn nearest_holder_wins_and_ties_go_to_lower_id() {
        let mut c = setup(&[(1, 100.0), (2, 130.0), (3, 180.0), (4, 70.0)]);
        for j in [2, 3, 4] {
            c.deliver(j, 1, 0.0).unwrap();
        }
        // 2 and 4 are both 30 m away.
        assert_eq!(c.best_source(1, 1, 1.0), Some(2));
        c.remove_node(2);
        assert_eq!(c.best_source(1, 1, 1.0), Some(4));
    }

    #[test]
    fn no_holder_means_timeout_to_i2d() {
        let mut c = setup(&[(1, 0.0), (2, 500.0)]);
        c.deliver(2, 3, 0.0).unwrap();
        assert_eq!(c.handle_request(1, 3, 1.0, 4).unwrap(), Disposition::Pending { timeout_at: 21.0 });
        assert!(c.on_ci_tick_scan(2.0).is_empty());
        let d = c.on_content_timeout(1, 3, 4).unwrap();
        assert_eq!(d.bs, 0);
        assert_eq!(c.on_content_timeout(1, 3, 4), None);
    }

    #[test]
    fn expired_holder_is_not_a_source() {
        let mut c = setup(&[(1, 0.0), (2, 50.0)]);
        c.deliver(2, 3, 0.0).unwrap();
        c.handle_request(1, 3, 61.0, 0).unwrap();
        assert!(c.on_ci_tick_scan(61.0).is_empty());
    }

    #[test]
    fn holder_coming_into_range_is_picked_up_by_scan() {
        let mut c = setup(&[(1, 0.0), (2, 300.0)]);
        c.deliver(2, 3, 0.0).unwrap();
        c.handle_request(1, 3, 1.0, 0).unwrap();
        let pos = [(1, Position::new(0.0, 0.0), 0), (2, Position::new(90.0, 0.0), 0)];
        c.refresh(&pos, gain).unwrap();
        let t = c.on_ci_tick_scan(2.0);
        assert_eq!(t, vec![D2dTrigger { request: 0, node: 1, content: 3, source: 2 }]);
    }

    #[test]
    fn handover_moves_pending_state() {
        let mut c = setup(&[(1, 0.0)]);
        c.handle_request(1, 3, 1.0, 0).unwrap();
        c.handover(1, 0, 1).unwrap();
        assert!(c.view(0).unwrap().pending.is_empty());
        assert_eq!(c.view(1).unwrap().pending.len(), 1);
        assert_eq!(c.on_content_timeout(1, 3, 0).unwrap().bs, 1);
        // Empty handover is a no-op.
        let mut e = setup(&[(5, 0.0)]);
        e.handover(5, 0, 2).unwrap();
        assert_eq!(e.association(5), Some(2));
    }

    #[test]
    fn exit_cancels_pending() {
        let mut c = setup(&[(1, 0.0)]);
        c.handle_request(1, 3, 1.0, 0).unwrap();
        let gone = c.remove_node(1);
        assert_eq!(gone.len(), 1);
        assert!(c.all_pending().is_empty());
    }

    #[test]
    fn benchmark_goes_straight_to_the_base_station() {
        let mut c = Cdms::new(CdmsParams {
            mode: Mode::BenchmarkI2dOnly,
            content_timeout: 0.0,
            ..params()
        });
        c.add_node(1, Position::new(0.0, 0.0), 3);
        c.add_node(2, Position::new(10.0, 0.0), 3);
        c.deliver(2, 9, 0.0).unwrap();
        assert_eq!(c.handle_request(1, 9, 1.0, 0).unwrap(), Disposition::I2dImmediate { bs: 3 });
    }

    #[test]
    fn failed_d2d_after_timeout_falls_back_to_i2d() {
        let mut c = setup(&[(1, 0.0), (2, 50.0)]);
        c.deliver(2, 7, 0.0).unwrap();
        c.handle_request(1, 7, 1.0, 0).unwrap();
        assert_eq!(c.abort_d2d(1, 7, 5.0), None);
        assert_eq!(c.pending(1, 7).unwrap().state, PendingState::Waiting);
        c.on_ci_tick_scan(6.0);
        assert!(c.abort_d2d(1, 7, 30.0).is_some());
    }
}
