//! HMM map matching over a directed road-segment network.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::atomic::{
    Coord, DynaRecord, DynaType, GeoType, GeoUnit, Properties, RelType, RelationRecord, Timestamp,
};
use crate::exec::Execution;

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MatchError {
    #[error("geo unit {0} is not a LineString")]
    NonLineGeometry(String),
    #[error("segment {0} has zero length")]
    ZeroLengthSegment(String),
    #[error("relation {rel_id} references unknown segment {segment}")]
    UnknownSegment { rel_id: String, segment: String },
    #[error("match parameters must be positive: {0}")]
    InvalidParams(String),
    #[error("no point of the trajectory has a candidate segment")]
    NoCandidatesAnywhere,
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

pub type Result<T, E = MatchError> = std::result::Result<T, E>;

/// Great-circle distance in meters.
pub fn haversine(a: Coord, b: Coord) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular frame centred on `origin`, in meters.
#[derive(Debug, Clone, Copy)]
struct LocalFrame {
    origin: Coord,
    kx: f64,
}

impl LocalFrame {
    fn at(origin: Coord) -> Self {
        LocalFrame {
            origin,
            kx: EARTH_RADIUS_M * origin.lat.to_radians().cos(),
        }
    }

    fn project(&self, c: Coord) -> (f64, f64) {
        (
            self.kx * (c.lon - self.origin.lon).to_radians(),
            EARTH_RADIUS_M * (c.lat - self.origin.lat).to_radians(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub coords: Vec<Coord>,
    /// `cum[i]` is the length up to vertex `i`; the last entry is the total.
    pub cum: Vec<f64>,
}

impl Segment {
    pub fn length(&self) -> f64 {
        *self.cum.last().expect("at least two vertices")
    }
}

/// Sparse uniform grid over an equirectangular frame about the network's
/// bounding-box centre.
#[derive(Debug, Clone)]
struct GridIndex {
    frame: LocalFrame,
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    /// Segments too large to rasterize; always returned.
    oversized: Vec<usize>,
}

const MAX_CELLS_PER_SEGMENT: i64 = 1 << 20;

impl GridIndex {
    fn build(segments: &[Segment], cell: f64) -> Self {
        let all = segments.iter().flat_map(|s| &s.coords);
        let (mut lo, mut hi) = (
            Coord::new(f64::INFINITY, f64::INFINITY),
            Coord::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for c in all {
            lo = Coord::new(lo.lon.min(c.lon), lo.lat.min(c.lat));
            hi = Coord::new(hi.lon.max(c.lon), hi.lat.max(c.lat));
        }
        let centre = if lo.lon.is_finite() {
            Coord::new((lo.lon + hi.lon) / 2.0, (lo.lat + hi.lat) / 2.0)
        } else {
            Coord::new(0.0, 0.0)
        };
        let mut index = GridIndex {
            frame: LocalFrame::at(centre),
            cell,
            cells: HashMap::new(),
            oversized: Vec::new(),
        };
        for (i, s) in segments.iter().enumerate() {
            let pts: Vec<(f64, f64)> = s.coords.iter().map(|c| index.frame.project(*c)).collect();
            let (x0, x1) = pts
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                    (a.min(p.0), b.max(p.0))
                });
            let (y0, y1) = pts
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                    (a.min(p.1), b.max(p.1))
                });
            let (cx0, cx1, cy0, cy1) = (index.key(x0), index.key(x1), index.key(y0), index.key(y1));
            if (cx1 - cx0 + 1).saturating_mul(cy1 - cy0 + 1) > MAX_CELLS_PER_SEGMENT {
                index.oversized.push(i);
                continue;
            }
            for cx in cx0..=cx1 {
                for cy in cy0..=cy1 {
                    index.cells.entry((cx, cy)).or_default().push(i);
                }
            }
        }
        index
    }

    fn key(&self, v: f64) -> i64 {
        (v / self.cell).floor() as i64
    }

    /// Every segment whose bounding box meets the query box for a disc of
    /// `radius` meters measured in the point's own frame.
    fn query(&self, p: Coord, radius: f64) -> Vec<usize> {
        let (px, py) = self.frame.project(p);
        let ratio = self.frame.origin.lat.to_radians().cos() / p.lat.to_radians().cos().max(1e-12);
        let rx = radius * ratio * (1.0 + 1e-9);
        let ry = radius * (1.0 + 1e-9);
        let mut out: Vec<usize> = self.oversized.clone();
        let (cx0, cx1) = (self.key(px - rx), self.key(px + rx));
        let (cy0, cy1) = (self.key(py - ry), self.key(py + ry));
        if (cx1 - cx0 + 1).saturating_mul(cy1 - cy0 + 1) > self.cells.len() as i64 {
            for ids in self.cells.values() {
                out.extend(ids);
            }
        } else {
            for cx in cx0..=cx1 {
                for cy in cy0..=cy1 {
                    if let Some(ids) = self.cells.get(&(cx, cy)) {
                        out.extend(ids);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    pub segments: Vec<Segment>,
    pub index_of: HashMap<String, usize>,
    /// Directed successor lists by segment index.
    pub out_edges: Vec<Vec<usize>>,
    index: GridIndex,
}

/// Build from LineString geo units and `geo` relations. Each relation is a
/// directed edge origin -> destination.
pub fn build_road_network(
    geo: &[GeoUnit],
    rel: &[RelationRecord],
    cell_size_m: f64,
) -> Result<RoadNetwork> {
    if cell_size_m.is_nan() || cell_size_m <= 0.0 {
        return Err(MatchError::InvalidParams(format!(
            "cell size {cell_size_m}"
        )));
    }
    let mut segments = Vec::with_capacity(geo.len());
    let mut index_of = HashMap::new();
    for g in geo {
        if g.geo_type != GeoType::LineString || g.coordinates.len() < 2 {
            return Err(MatchError::NonLineGeometry(g.geo_id.clone()));
        }
        let mut cum = vec![0.0];
        for w in g.coordinates.windows(2) {
            cum.push(cum.last().unwrap() + haversine(w[0], w[1]));
        }
        let seg = Segment {
            id: g.geo_id.clone(),
            coords: g.coordinates.clone(),
            cum,
        };
        if seg.length().is_nan() || seg.length() <= 0.0 {
            return Err(MatchError::ZeroLengthSegment(g.geo_id.clone()));
        }
        index_of.insert(g.geo_id.clone(), segments.len());
        segments.push(seg);
    }
    let mut out_edges = vec![Vec::new(); segments.len()];
    for r in rel.iter().filter(|r| r.rel_type == RelType::Geo) {
        let find = |id: &String| {
            index_of
                .get(id)
                .copied()
                .ok_or_else(|| MatchError::UnknownSegment {
                    rel_id: r.rel_id.clone(),
                    segment: id.clone(),
                })
        };
        let (a, b) = (find(&r.origin_id)?, find(&r.des_id)?);
        if !out_edges[a].contains(&b) {
            out_edges[a].push(b);
        }
    }
    let index = GridIndex::build(&segments, cell_size_m);
    Ok(RoadNetwork {
        segments,
        index_of,
        out_edges,
        index,
    })
}

impl RoadNetwork {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.index_of.get(id).map(|i| &self.segments[*i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub sigma: f64,
    pub beta: f64,
    pub radius: f64,
    pub max_candidates: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            sigma: 10.0,
            beta: 5.0,
            radius: 200.0,
            max_candidates: 10,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma", self.sigma),
            ("beta", self.beta),
            ("radius", self.radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MatchError::InvalidParams(format!("{name} = {v}")));
            }
        }
        if self.max_candidates == 0 {
            return Err(MatchError::InvalidParams("max_candidates = 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub segment: usize,
    pub projection: Coord,
    pub distance: f64,
    pub offset: f64,
}

/// Exact projection of `p` onto segment `s`, in the point's local frame.
pub fn project_onto(net: &RoadNetwork, s: usize, p: Coord) -> Candidate {
    let seg = &net.segments[s];
    let frame = LocalFrame::at(p);
    let mut best: Option<Candidate> = None;
    for i in 0..seg.coords.len() - 1 {
        let (a, b) = (seg.coords[i], seg.coords[i + 1]);
        let (ax, ay) = frame.project(a);
        let (bx, by) = frame.project(b);
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (qx, qy) = (ax + t * dx, ay + t * dy);
        let distance = (qx * qx + qy * qy).sqrt();
        if best.is_none_or(|c| distance < c.distance) {
            best = Some(Candidate {
                segment: s,
                projection: Coord::new(a.lon + t * (b.lon - a.lon), a.lat + t * (b.lat - a.lat)),
                distance,
                offset: (seg.cum[i] + t * (seg.cum[i + 1] - seg.cum[i])).min(seg.length()),
            });
        }
    }
    best.expect("segment has a leg")
}

fn rank_candidates(mut cands: Vec<Candidate>, params: &MatchParams) -> Vec<Candidate> {
    cands.retain(|c| c.distance <= params.radius);
    cands.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.segment.cmp(&b.segment))
    });
    cands.truncate(params.max_candidates);
    cands
}

/// Segments within `params.radius`, nearest first, at most
/// `params.max_candidates`.
pub fn candidate_segments(net: &RoadNetwork, p: Coord, params: &MatchParams) -> Vec<Candidate> {
    let cands = net
        .index
        .query(p, params.radius)
        .into_iter()
        .map(|s| project_onto(net, s, p))
        .collect();
    rank_candidates(cands, params)
}

/// [`candidate_segments`] without the spatial index.
pub fn candidate_segments_scan(
    net: &RoadNetwork,
    p: Coord,
    params: &MatchParams,
) -> Vec<Candidate> {
    let cands = (0..net.len()).map(|s| project_onto(net, s, p)).collect();
    rank_candidates(cands, params)
}

pub fn emission_logprob(distance: f64, sigma: f64) -> f64 {
    -0.5 * (distance / sigma).powi(2) - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

/// `None` route distance means unreachable and scores negative infinity.
pub fn transition_logprob(route: Option<f64>, great_circle: f64, beta: f64) -> f64 {
    match route {
        Some(r) => -(r - great_circle).abs() / beta - beta.ln(),
        None => f64::NEG_INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct State {
    cost: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from the end of segment `from`: `dist[v]` is the length driven
/// before entering `v` (lengths of the segments strictly between). `from`
/// itself is reached only through a cycle. Stops once every target is
/// settled.
fn between_lengths(
    net: &RoadNetwork,
    from: usize,
    targets: &[usize],
) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = net.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &v in &net.out_edges[from] {
        if dist[v] > 0.0 {
            dist[v] = 0.0;
            heap.push(State { cost: 0.0, node: v });
        }
    }
    let mut remaining = targets.iter().filter(|t| **t < n).count();
    let mut is_target = vec![false; n];
    for &t in targets {
        is_target[t] = true;
    }
    while let Some(State { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if is_target[node] {
            is_target[node] = false;
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        let next = cost + net.segments[node].length();
        for &w in &net.out_edges[node] {
            if next < dist[w] {
                dist[w] = next;
                prev[w] = Some(node);
                heap.push(State {
                    cost: next,
                    node: w,
                });
            }
        }
    }
    (dist, prev)
}

/// Length of the cheapest segment chain strictly between `from` and `to`,
/// or `None` if `to` cannot follow `from`.
pub fn segment_gap(net: &RoadNetwork, from: usize, to: usize) -> Option<f64> {
    let (dist, _) = between_lengths(net, from, &[to]);
    dist[to].is_finite().then_some(dist[to])
}

fn route_between(a: &Candidate, b: &Candidate, net: &RoadNetwork, dist: &[f64]) -> Option<f64> {
    if a.segment == b.segment && b.offset >= a.offset {
        return Some(b.offset - a.offset);
    }
    let d = dist[b.segment];
    d.is_finite()
        .then(|| (net.segments[a.segment].length() - a.offset) + d + b.offset)
}

/// Driving distance from candidate `a` to candidate `b`.
pub fn shortest_path_length(net: &RoadNetwork, a: &Candidate, b: &Candidate) -> Option<f64> {
    if a.segment == b.segment && b.offset >= a.offset {
        return Some(b.offset - a.offset);
    }
    let (dist, _) = between_lengths(net, a.segment, &[b.segment]);
    route_between(a, b, net, &dist)
}

fn intermediate_path(prev: &[Option<usize>], to: usize) -> Vec<usize> {
    let mut path = Vec::new();
    let mut cur = prev[to];
    while let Some(v) = cur {
        path.push(v);
        cur = prev[v];
    }
    path.reverse();
    path
}

/// Most probable state sequence through a lattice. `transitions[i][a][b]`
/// scores state `a` at step `i` followed by state `b` at step `i + 1`.
/// Returns `None` when every path scores negative infinity. Among equal
/// scores the lowest state index wins at every step.
pub fn viterbi_decode(
    emissions: &[Vec<f64>],
    transitions: &[Vec<Vec<f64>>],
) -> Option<(Vec<usize>, f64)> {
    let first = emissions.first()?;
    let mut delta = first.clone();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(emissions.len());
    for (i, em) in emissions.iter().enumerate().skip(1) {
        let trans = &transitions[i - 1];
        let mut next = vec![f64::NEG_INFINITY; em.len()];
        let mut ptr = vec![0usize; em.len()];
        for b in 0..em.len() {
            let mut best = f64::NEG_INFINITY;
            for a in 0..delta.len() {
                let s = delta[a] + trans[a][b];
                if s > best {
                    best = s;
                    ptr[b] = a;
                }
            }
            next[b] = best + em[b];
        }
        delta = next;
        back.push(ptr);
    }
    let mut last = 0;
    for s in 1..delta.len() {
        if delta[s] > delta[last] {
            last = s;
        }
    }
    let score = delta[last];
    if score == f64::NEG_INFINITY {
        return None;
    }
    let mut path = vec![last];
    for ptr in back.iter().rev() {
        last = ptr[last];
        path.push(last);
    }
    path.reverse();
    Some((path, score))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPoint {
    pub segment: String,
    pub projection: Coord,
    pub distance: f64,
    pub offset: f64,
    /// Emission plus incoming transition log-probability.
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// One entry per input point; `None` where no candidate was found.
    pub points: Vec<Option<MatchedPoint>>,
    /// Matched segments joined by their connecting shortest paths.
    pub path: Vec<String>,
    /// Indices of the points that start a new chain after a break.
    pub breaks: Vec<usize>,
    pub score: f64,
}

impl MatchResult {
    pub fn matched_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }

    /// `(segment id, length)` pairs of the stitched path.
    pub fn route(&self, net: &RoadNetwork) -> Vec<(String, f64)> {
        self.path
            .iter()
            .map(|id| (id.clone(), net.segment(id).map_or(0.0, Segment::length)))
            .collect()
    }
}

struct Chain {
    points: Vec<usize>,
    cands: Vec<Vec<Candidate>>,
    transitions: Vec<Vec<Vec<f64>>>,
    /// Per-transition `prev` trees keyed by source candidate.
    prevs: Vec<Vec<Vec<Option<usize>>>>,
}

impl Chain {
    fn start(point: usize, cands: Vec<Candidate>) -> Self {
        Chain {
            points: vec![point],
            cands: vec![cands],
            transitions: Vec::new(),
            prevs: Vec::new(),
        }
    }
}

/// Decode one trajectory. A point without candidates, or one no previous
/// candidate can reach, breaks the chain and matching restarts after it.
pub fn viterbi_match(
    net: &RoadNetwork,
    points: &[Coord],
    params: &MatchParams,
) -> Result<MatchResult> {
    params.validate()?;
    if points.is_empty() {
        return Err(MatchError::EmptyTrajectory);
    }
    let mut chains: Vec<Chain> = Vec::new();
    let mut current: Option<Chain> = None;
    for (i, p) in points.iter().enumerate() {
        let cands = candidate_segments(net, *p, params);
        if cands.is_empty() {
            chains.extend(current.take());
            continue;
        }
        let Some(chain) = current.as_mut() else {
            current = Some(Chain::start(i, cands));
            continue;
        };
        let last = *chain.points.last().unwrap();
        let gc = haversine(points[last], *p);
        let prev_cands = chain.cands.last().unwrap();
        let targets: Vec<usize> = cands.iter().map(|c| c.segment).collect();
        let mut trans = Vec::with_capacity(prev_cands.len());
        let mut prevs = Vec::with_capacity(prev_cands.len());
        for a in prev_cands {
            let (dist, prev) = between_lengths(net, a.segment, &targets);
            trans.push(
                cands
                    .iter()
                    .map(|b| transition_logprob(route_between(a, b, net, &dist), gc, params.beta))
                    .collect::<Vec<_>>(),
            );
            prevs.push(prev);
        }
        if trans.iter().flatten().all(|t| *t == f64::NEG_INFINITY) {
            chains.extend(current.replace(Chain::start(i, cands)));
            continue;
        }
        chain.points.push(i);
        chain.cands.push(cands);
        chain.transitions.push(trans);
        chain.prevs.push(prevs);
    }
    chains.extend(current);
    if chains.is_empty() {
        return Err(MatchError::NoCandidatesAnywhere);
    }

    let mut result = MatchResult {
        points: vec![None; points.len()],
        path: Vec::new(),
        breaks: chains.iter().skip(1).map(|c| c.points[0]).collect(),
        score: 0.0,
    };
    for chain in &chains {
        let emissions: Vec<Vec<f64>> = chain
            .cands
            .iter()
            .map(|cs| {
                cs.iter()
                    .map(|c| emission_logprob(c.distance, params.sigma))
                    .collect()
            })
            .collect();
        let (states, score) = viterbi_decode(&emissions, &chain.transitions)
            .expect("every chain link has a finite transition");
        result.score += score;
        for (step, &s) in states.iter().enumerate() {
            let c = chain.cands[step][s];
            let incoming = if step == 0 {
                0.0
            } else {
                chain.transitions[step - 1][states[step - 1]][s]
            };
            result.points[chain.points[step]] = Some(MatchedPoint {
                segment: net.segments[c.segment].id.clone(),
                projection: c.projection,
                distance: c.distance,
                offset: c.offset,
                log_prob: emissions[step][s] + incoming,
            });
            let push = |path: &mut Vec<String>, seg: usize| {
                let id = &net.segments[seg].id;
                if path.last() != Some(id) {
                    path.push(id.clone());
                }
            };
            if step == 0 {
                push(&mut result.path, c.segment);
                continue;
            }
            let a = chain.cands[step - 1][states[step - 1]];
            if a.segment == c.segment && c.offset >= a.offset {
                continue;
            }
            for seg in intermediate_path(&chain.prevs[step - 1][states[step - 1]], c.segment) {
                push(&mut result.path, seg);
            }
            // pushed unconditionally: a loop back onto the same segment re-enters it
            result.path.push(net.segments[c.segment].id.clone());
        }
    }
    Ok(result)
}

/// Match many trajectories; results keep input order.
pub fn match_all(
    net: &RoadNetwork,
    trajectories: &[Vec<Coord>],
    params: &MatchParams,
    exec: Execution,
) -> Vec<Result<MatchResult>> {
    exec.map(trajectories, |t| viterbi_match(net, t, params))
}

/// Matched points as trajectory rows whose location is the segment id.
pub fn matched_dyna_records(
    entity_id: &str,
    times: &[Timestamp],
    result: &MatchResult,
    first_id: usize,
) -> Vec<DynaRecord> {
    result
        .points
        .iter()
        .zip(times)
        .filter_map(|(p, t)| p.as_ref().map(|p| (p, t)))
        .enumerate()
        .map(|(i, (p, t))| {
            let mut properties = Properties::new();
            properties.insert("lon", p.projection.lon);
            properties.insert("lat", p.projection.lat);
            properties.insert("distance", p.distance);
            DynaRecord {
                dyna_id: (first_id + i).to_string(),
                dyna_type: DynaType::Trajectory,
                time: *t,
                entity_id: entity_id.to_string(),
                location: Some(p.segment.clone()),
                properties,
            }
        })
        .collect()
}
