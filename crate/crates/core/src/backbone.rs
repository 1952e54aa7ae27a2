//! The prolific backbone: binary branching OU particles with Exp(alpha)
//! lifetimes, Ulam-Harris genealogy and the martingales W and I.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::{AtomicMeasure, ModelParams};
use crate::particles::ou_step;

/// Ulam-Harris label: index of the initial atom followed by the sequence
/// of child indices (0 or 1). Written as `root:digits`, e.g. `3:0110`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub root: u32,
    pub path: SmallVec<[u8; 32]>,
}

impl Label {
    pub fn root(root: u32) -> Label {
        Label { root, path: SmallVec::new() }
    }

    pub fn child(&self, c: u8) -> Label {
        let mut path = self.path.clone();
        path.push(c);
        Label { root: self.root, path }
    }

    pub fn generation(&self) -> usize {
        self.path.len()
    }

    pub fn is_ancestor_of(&self, other: &Label) -> bool {
        self.root == other.root && other.path.starts_with(&self.path)
    }

    pub fn parse(s: &str) -> Result<Label> {
        let bad = || Error::Parse { pos: 0, msg: format!("invalid label '{s}'") };
        let (r, p) = s.split_once(':').ok_or_else(bad)?;
        let root = r.parse::<u32>().map_err(|_| bad())?;
        let mut path = SmallVec::new();
        for ch in p.chars() {
            match ch {
                '0' => path.push(0),
                '1' => path.push(1),
                _ => return Err(bad()),
            }
        }
        Ok(Label { root, path })
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.root)?;
        for c in &self.path {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneParticle {
    pub label: Label,
    pub position: Vec<f64>,
    pub birth_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneState {
    pub particles: Vec<BackboneParticle>,
    pub time: f64,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingalePair {
    /// e^{-alpha t} |z_t|
    pub w: f64,
    /// e^{-(alpha - mu) t} sum_i z_t(i)
    pub i: Vec<f64>,
}

pub fn backbone_martingales(state: &BackboneState, params: &ModelParams) -> MartingalePair {
    let t = state.time;
    let mut sum = vec![0.0; state.dim];
    for p in &state.particles {
        for (s, x) in sum.iter_mut().zip(&p.position) {
            *s += x;
        }
    }
    let scale = (-(params.alpha - params.mu) * t).exp();
    MartingalePair {
        w: (-params.alpha * t).exp() * state.particles.len() as f64,
        i: sum.into_iter().map(|s| s * scale).collect(),
    }
}

/// One line of the event log. A birth has a parent and two children; the
/// initial particles have no parent and the particles alive at the end
/// have no children.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub parent: Option<Label>,
    pub children: Vec<Label>,
    pub position: Vec<f64>,
}

impl LogRecord {
    /// `time<TAB>parent<TAB>child,child<TAB>x1,x2`, with `-` for a missing
    /// parent or child list. Reals are written in shortest round-trip form.
    pub fn to_line(&self) -> String {
        let parent = self.parent.as_ref().map_or("-".to_string(), |l| l.to_string());
        let children = if self.children.is_empty() {
            "-".to_string()
        } else {
            self.children.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        };
        let pos = self.position.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
        format!("{:?}\t{parent}\t{children}\t{pos}", self.time)
    }

    pub fn parse(line: &str) -> Result<LogRecord> {
        let bad = |m: &str| Error::Parse { pos: 0, msg: format!("{m} in log line '{line}'") };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad("expected four fields"));
        }
        let time = fields[0].parse::<f64>().map_err(|_| bad("bad time"))?;
        let parent = if fields[1] == "-" { None } else { Some(Label::parse(fields[1])?) };
        let children = if fields[2] == "-" {
            Vec::new()
        } else {
            fields[2].split(',').map(Label::parse).collect::<Result<_>>()?
        };
        let position = fields[3]
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| bad("bad coordinate")))
            .collect::<Result<_>>()?;
        Ok(LogRecord { time, parent, children, position })
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Clock {
    time: f64,
    slot: usize,
}

impl Eq for Clock {}

impl Ord for Clock {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap on time; slot breaks ties deterministically.
        other.time.total_cmp(&self.time).then_with(|| other.slot.cmp(&self.slot))
    }
}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Runs the backbone from unit atoms `gamma` to `t_end`. Positions are
/// synchronized at each time in `observe` (sorted, within [0, t_end]) and
/// the martingales recorded there. When `log` is given every birth, the
/// initial particles and the final particles are appended to it.
pub fn simulate_backbone<R: Rng + ?Sized>(
    gamma: &AtomicMeasure,
    t_end: f64,
    observe: &[f64],
    params: &ModelParams,
    cap: usize,
    rng: &mut R,
    log: Option<&mut Vec<LogRecord>>,
) -> Result<(BackboneState, Vec<MartingalePair>)> {
    let (state, obs) = run(gamma, t_end, observe, params, cap, rng, log, true)?;
    Ok((state.expect("state requested"), obs))
}

/// The martingales at the observation times only, without genealogy or
/// final state. Same law and same random stream use as
/// [`simulate_backbone`].
pub fn backbone_martingale_path<R: Rng + ?Sized>(
    gamma: &AtomicMeasure,
    observe: &[f64],
    params: &ModelParams,
    cap: usize,
    rng: &mut R,
) -> Result<Vec<MartingalePair>> {
    let t_end = observe.last().copied().unwrap_or(0.0);
    Ok(run(gamma, t_end, observe, params, cap, rng, None, false)?.1)
}

#[allow(clippy::too_many_arguments)]
fn run<R: Rng + ?Sized>(
    gamma: &AtomicMeasure,
    t_end: f64,
    observe: &[f64],
    params: &ModelParams,
    cap: usize,
    rng: &mut R,
    mut log: Option<&mut Vec<LogRecord>>,
    want_state: bool,
) -> Result<(Option<BackboneState>, Vec<MartingalePair>)> {
    let track = want_state || log.is_some();
    if gamma.dim() != params.dim {
        return Err(Error::DimensionMismatch { expected: params.dim, got: gamma.dim() });
    }
    if gamma.atoms().iter().any(|(_, m)| *m != 1.0) {
        return Err(Error::InvalidParameter("backbone atoms must have unit mass".into()));
    }
    if !(t_end >= 0.0) || observe.iter().any(|t| !(*t >= 0.0 && *t <= t_end)) || observe.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("observation times must be sorted within [0, t_end]".into()));
    }
    let life = Exp::new(params.alpha).expect("alpha > 0");
    let d = params.dim;
    // Genealogy as a forest of nodes; labels are built only when needed.
    let mut tree = Genealogy::default();
    let mut node: Vec<u32> = Vec::new();
    let mut pos: Vec<f64> = Vec::new();
    let mut last: Vec<f64> = Vec::new();
    let mut birth: Vec<f64> = Vec::new();
    let mut heap = BinaryHeap::new();
    for (i, (x, _)) in gamma.atoms().iter().enumerate() {
        let id = tree.root(i as u32);
        if let Some(l) = log.as_deref_mut() {
            l.push(LogRecord { time: 0.0, parent: None, children: vec![tree.label(id)], position: x.clone() });
        }
        node.push(id);
        pos.extend_from_slice(x);
        last.push(0.0);
        birth.push(0.0);
        heap.push(Clock { time: life.sample(rng), slot: i });
    }
    if node.len() > cap {
        return Err(Error::PopulationCap { cap, time: 0.0, population: node.len() });
    }
    let mut observations = Vec::with_capacity(observe.len());
    let mut next_obs = 0;
    let sync = |pos: &mut Vec<f64>, last: &mut Vec<f64>, t: f64, rng: &mut R| {
        for (i, x) in pos.chunks_exact_mut(d).enumerate() {
            ou_step(x, t - last[i], params, rng);
            last[i] = t;
        }
    };
    let observe_at = |pos: &[f64], count: usize, t: f64| {
        let mut sum = vec![0.0; d];
        for x in pos.chunks_exact(d) {
            for (s, v) in sum.iter_mut().zip(x) {
                *s += v;
            }
        }
        let scale = (-(params.alpha - params.mu) * t).exp();
        MartingalePair {
            w: (-params.alpha * t).exp() * count as f64,
            i: sum.into_iter().map(|s| s * scale).collect(),
        }
    };
    loop {
        let next = heap.peek().map_or(f64::INFINITY, |c| c.time);
        while next_obs < observe.len() && observe[next_obs] <= next.min(t_end) {
            let t = observe[next_obs];
            sync(&mut pos, &mut last, t, rng);
            observations.push(observe_at(&pos, node.len(), t));
            next_obs += 1;
        }
        if next > t_end {
            break;
        }
        let Clock { time: now, slot } = heap.pop().expect("peeked");
        let x = &mut pos[slot * d..(slot + 1) * d];
        ou_step(x, now - last[slot], params, rng);
        if node.len() + 1 > cap {
            return Err(Error::PopulationCap { cap, time: now, population: node.len() + 1 });
        }
        let parent = node[slot];
        let (c0, c1) = if track { (tree.child(parent, 0), tree.child(parent, 1)) } else { (0, 0) };
        if let Some(l) = log.as_deref_mut() {
            l.push(LogRecord {
                time: now,
                parent: Some(tree.label(parent)),
                children: vec![tree.label(c0), tree.label(c1)],
                position: x.to_vec(),
            });
        }
        node[slot] = c0;
        last[slot] = now;
        birth[slot] = now;
        let new = node.len();
        node.push(c1);
        pos.extend_from_within(slot * d..(slot + 1) * d);
        last.push(now);
        birth.push(now);
        heap.push(Clock { time: now + life.sample(rng), slot });
        heap.push(Clock { time: now + life.sample(rng), slot: new });
    }
    sync(&mut pos, &mut last, t_end, rng);
    if !want_state {
        return Ok((None, observations));
    }
    let particles: Vec<BackboneParticle> = node
        .into_iter()
        .enumerate()
        .map(|(i, id)| BackboneParticle { label: tree.label(id), position: pos[i * d..(i + 1) * d].to_vec(), birth_time: birth[i] })
        .collect();
    if let Some(l) = log {
        for p in &particles {
            l.push(LogRecord { time: t_end, parent: Some(p.label.clone()), children: vec![], position: p.position.clone() });
        }
    }
    Ok((Some(BackboneState { particles, time: t_end, dim: d }), observations))
}

/// Parent links of every label created during a run.
#[derive(Default)]
struct Genealogy {
    /// (parent node or root index, child digit; 2 marks a root)
    nodes: Vec<(u32, u8)>,
}

impl Genealogy {
    fn root(&mut self, r: u32) -> u32 {
        self.nodes.push((r, 2));
        (self.nodes.len() - 1) as u32
    }

    fn child(&mut self, parent: u32, c: u8) -> u32 {
        self.nodes.push((parent, c));
        (self.nodes.len() - 1) as u32
    }

    fn label(&self, mut id: u32) -> Label {
        let mut path: SmallVec<[u8; 32]> = SmallVec::new();
        loop {
            let (up, c) = self.nodes[id as usize];
            if c == 2 {
                path.reverse();
                return Label { root: up, path };
            }
            path.push(c);
            id = up;
        }
    }
}

/// Rebuilds the final state from an event log, checking that every birth
/// replaces a living particle by exactly its two children.
pub fn replay(records: &[LogRecord], dim: usize) -> Result<BackboneState> {
    let mut alive: HashMap<Label, (Vec<f64>, f64)> = HashMap::new();
    let mut finals: Vec<BackboneParticle> = Vec::new();
    let mut t_end = 0.0;
    for r in records {
        match (&r.parent, r.children.len()) {
            (None, 1) => {
                alive.insert(r.children[0].clone(), (r.position.clone(), 0.0));
            }
            (Some(p), 2) => {
                if alive.remove(p).is_none() {
                    return Err(Error::Replay(format!("birth from unknown or dead particle {p}")));
                }
                for (i, c) in r.children.iter().enumerate() {
                    if *c != p.child(i as u8) {
                        return Err(Error::Replay(format!("{c} is not child {i} of {p}")));
                    }
                    alive.insert(c.clone(), (r.position.clone(), r.time));
                }
            }
            (Some(p), 0) => {
                let (_, b) = alive
                    .get(p)
                    .ok_or_else(|| Error::Replay(format!("final record for unknown particle {p}")))?;
                finals.push(BackboneParticle { label: p.clone(), position: r.position.clone(), birth_time: *b });
                t_end = r.time;
            }
            _ => return Err(Error::Replay(format!("malformed record {}", r.to_line()))),
        }
    }
    if finals.len() != alive.len() {
        return Err(Error::Replay(format!("{} particles alive but {} final records", alive.len(), finals.len())));
    }
    Ok(BackboneState { particles: finals, time: t_end, dim })
}

/// Poisson(alpha/beta |nu|) unit atoms at independent positions drawn from
/// nu / |nu|.
pub fn sample_backbone_start<R: Rng + ?Sized>(nu: &AtomicMeasure, params: &ModelParams, rng: &mut R) -> AtomicMeasure {
    let mass = nu.total_mass();
    let lam = params.lambda_star() * mass;
    let k = if lam > 0.0 { Poisson::new(lam).expect("finite mean").sample(rng) as usize } else { 0 };
    let mut atoms = Vec::with_capacity(k);
    for _ in 0..k {
        let mut u = rng.random::<f64>() * mass;
        let mut chosen = &nu.atoms()[nu.atoms().len() - 1].0;
        for (x, m) in nu.atoms() {
            if u < *m {
                chosen = x;
                break;
            }
            u -= m;
        }
        atoms.push((chosen.clone(), 1.0));
    }
    AtomicMeasure::new(nu.dim(), atoms).expect("atoms copied from a valid measure")
}
