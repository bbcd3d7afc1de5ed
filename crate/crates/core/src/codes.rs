//! Fault-detection codes over gradient copies.
//!
//! The replication code hands every sampled point to `f + 1` workers and
//! compares the returned copies bit-for-bit. Disagreement marks the point
//! suspect; the master then recruits `f` more workers for each suspect point
//! and resolves it by strict majority over `2f + 1` copies, which also names
//! the workers that lied.
//!
//! [`LinearCode`] is the three-worker, single-fault code in which each worker
//! sends one encoded vector instead of a tuple of replicas.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::Gradient;
use crate::rng::StreamRng;
use crate::WorkerId;

/// Copies of each point's gradient, keyed by position in the mini-batch and
/// then by the worker that sent it.
pub type Copies = BTreeMap<usize, BTreeMap<WorkerId, Gradient>>;

/// Which workers are responsible for each point of the current mini-batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    assignees: Vec<Vec<WorkerId>>,
    degree: usize,
}

impl Assignment {
    /// Base replication degree of the proactive phase.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_points(&self) -> usize {
        self.assignees.len()
    }

    pub fn assignees(&self, point: usize) -> &[WorkerId] {
        &self.assignees[point]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[WorkerId])> {
        self.assignees.iter().enumerate().map(|(i, w)| (i, w.as_slice()))
    }

    /// Points held by each worker, in point order.
    pub fn loads(&self) -> BTreeMap<WorkerId, Vec<usize>> {
        let mut out: BTreeMap<WorkerId, Vec<usize>> = BTreeMap::new();
        for (point, workers) in self.iter() {
            for w in workers {
                out.entry(*w).or_default().push(point);
            }
        }
        out
    }

    /// Total number of (point, worker) slots, i.e. gradients to compute.
    pub fn total_copies(&self) -> usize {
        self.assignees.iter().map(Vec::len).sum()
    }
}

/// Balanced replication: every point goes to `degree` distinct workers and
/// worker loads differ by at most one.
///
/// The active workers are shuffled once, then the `m * degree` slots are
/// dealt round-robin, so each point's assignees are `degree` consecutive
/// workers of the shuffled ring.
pub fn replicate_assign(
    m: usize,
    active: &BTreeSet<WorkerId>,
    degree: usize,
    rng: &mut StreamRng,
) -> Result<Assignment> {
    if m == 0 {
        return Err(Error::EmptyInput("mini-batch"));
    }
    if degree == 0 || degree > active.len() {
        return Err(Error::InsufficientWorkers {
            needed: degree.max(1),
            available: active.len(),
        });
    }
    let mut ring: Vec<WorkerId> = active.iter().copied().collect();
    ring.shuffle(rng);
    let n = ring.len();
    let assignees = (0..m)
        .map(|point| (0..degree).map(|k| ring[(point * degree + k) % n]).collect())
        .collect();
    Ok(Assignment { assignees, degree })
}

#[derive(Debug, Clone)]
pub struct DetectionReport {
    pub suspects: BTreeSet<usize>,
    pub copies: Copies,
}

/// Marks every point whose copies are not all bit-identical.
pub fn detect(copies: Copies) -> Result<DetectionReport> {
    let mut suspects = BTreeSet::new();
    for (point, by_worker) in &copies {
        if by_worker.len() < 2 {
            return Err(Error::SingleCopyPoint(*point));
        }
        let mut values = by_worker.values();
        let first = values.next().expect("at least two copies");
        if values.any(|g| !g.same_bits(first)) {
            suspects.insert(*point);
        }
    }
    Ok(DetectionReport { suspects, copies })
}

/// Adds `f_t` fresh workers to each suspect point, drawn uniformly without
/// replacement from the active workers not already holding it.
pub fn reactive_assign(
    suspects: &BTreeSet<usize>,
    existing: &Assignment,
    f_t: usize,
    active: &BTreeSet<WorkerId>,
    rng: &mut StreamRng,
) -> Result<Assignment> {
    let mut out = existing.clone();
    for &point in suspects {
        let current = out.assignees.get_mut(point).ok_or_else(|| {
            Error::InvalidDimensions(format!(
                "suspect point {point} outside a batch of {}",
                existing.num_points()
            ))
        })?;
        let pool: Vec<WorkerId> = active
            .iter()
            .filter(|w| !current.contains(w))
            .copied()
            .collect();
        if pool.len() < f_t {
            return Err(Error::InsufficientWorkers {
                needed: current.len() + f_t,
                available: active.len(),
            });
        }
        current.extend(pool.choose_multiple(rng, f_t).copied());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct IdentificationReport {
    pub resolved: BTreeMap<usize, Gradient>,
    pub identified: BTreeSet<WorkerId>,
}

/// Majority vote over at least `2f_t + 1` copies. Returns the value held by
/// `f_t + 1` or more workers, and every worker whose copy differs from it.
pub fn identify(
    copies: &BTreeMap<WorkerId, Gradient>,
    f_t: usize,
) -> Result<(Gradient, BTreeSet<WorkerId>)> {
    let needed = f_t + 1;
    if copies.len() < 2 * f_t + 1 {
        return Err(Error::NoMajority {
            needed,
            copies: copies.len(),
        });
    }
    let mut tally: HashMap<Vec<u64>, (usize, &Gradient)> = HashMap::new();
    for g in copies.values() {
        tally.entry(g.bit_key()).or_insert((0, g)).0 += 1;
    }
    let winner = tally
        .values()
        .find(|(count, _)| *count >= needed)
        .map(|(_, g)| (*g).clone())
        .ok_or(Error::NoMajority {
            needed,
            copies: copies.len(),
        })?;
    let liars = copies
        .iter()
        .filter(|(_, g)| !g.same_bits(&winner))
        .map(|(w, _)| *w)
        .collect();
    Ok((winner, liars))
}

/// Runs [`identify`] on every suspect point of a detection report.
pub fn identify_all(
    report: &DetectionReport,
    extra: &Copies,
    f_t: usize,
) -> Result<IdentificationReport> {
    let mut resolved = BTreeMap::new();
    let mut identified = BTreeSet::new();
    for &point in &report.suspects {
        let mut all = report.copies.get(&point).cloned().unwrap_or_default();
        if let Some(more) = extra.get(&point) {
            all.extend(more.iter().map(|(w, g)| (*w, g.clone())));
        }
        let (value, liars) = identify(&all, f_t)?;
        resolved.insert(point, value);
        identified.extend(liars);
    }
    Ok(IdentificationReport {
        resolved,
        identified,
    })
}

/// A worker's message for one round.
#[derive(Debug, Clone)]
pub struct Symbol {
    pub worker: WorkerId,
    pub payload: Payload,
}

#[derive(Debug, Clone)]
pub enum Payload {
    /// One gradient copy per assigned point, in point order.
    Replicas(Vec<(usize, Gradient)>),
    /// A single encoded combination of the worker's gradients.
    Encoded(Gradient),
}

/// Worker position in the three-worker linear code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearRole {
    One,
    Two,
    Three,
}

impl LinearRole {
    pub fn worker(self) -> WorkerId {
        match self {
            LinearRole::One => WorkerId(0),
            LinearRole::Two => WorkerId(1),
            LinearRole::Three => WorkerId(2),
        }
    }
}

/// Detection code for `n = 3`, `f = 1`. Worker 1 holds `(g1, g2)`, worker 2
/// `(g2, g3)`, worker 3 `(g3, g1)`, and they send
///
/// ```text
/// c1 = g1 + 2 g2      c2 = -g2 + g3      c3 = -g1 - 2 g3
/// ```
///
/// so that `c1 + c2 = -(c2 + c3) = (c1 - c3) / 2 = g1 + g2 + g3`.
#[derive(Debug, Clone, Copy)]
pub struct LinearCode {
    _private: (),
}

#[derive(Debug, Clone)]
pub struct LinearCheck {
    pub detected: bool,
    pub sum: Option<Gradient>,
    pub reconstructions: [Gradient; 3],
}

fn combine(a: &Gradient, ca: f64, b: &Gradient, cb: f64) -> Result<Gradient> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidDimensions(format!(
            "symbols of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| ca * x + cb * y)
        .collect::<Vec<_>>()
        .into())
}

impl LinearCode {
    pub fn new(n: usize, f: usize) -> Result<Self> {
        if n != 3 || f != 1 {
            return Err(Error::WrongConfiguration { n, f });
        }
        Ok(LinearCode { _private: () })
    }

    /// Encodes a worker's two gradients: `(g1, g2)` for worker 1, `(g2, g3)`
    /// for worker 2 and `(g3, g1)` for worker 3.
    pub fn encode(&self, role: LinearRole, g_a: &Gradient, g_b: &Gradient) -> Result<Symbol> {
        let encoded = match role {
            LinearRole::One => combine(g_a, 1.0, g_b, 2.0)?,
            LinearRole::Two => combine(g_a, -1.0, g_b, 1.0)?,
            LinearRole::Three => combine(g_b, -1.0, g_a, -2.0)?,
        };
        Ok(Symbol {
            worker: role.worker(),
            payload: Payload::Encoded(encoded),
        })
    }

    /// Compares the three reconstructions of the gradient sum; they agree
    /// within `tol` componentwise iff no fault is detected.
    pub fn check(&self, c1: &Gradient, c2: &Gradient, c3: &Gradient, tol: f64) -> Result<LinearCheck> {
        let r1 = combine(c1, 1.0, c2, 1.0)?;
        let r2 = combine(c2, -1.0, c3, -1.0)?;
        let r3 = combine(c1, 0.5, c3, -0.5)?;
        let close = |a: &Gradient, b: &Gradient| {
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(x, y)| (x - y).abs() <= tol)
        };
        let agree = close(&r1, &r2) && close(&r2, &r3) && close(&r1, &r3);
        Ok(LinearCheck {
            detected: !agree,
            sum: agree.then(|| r1.clone()),
            reconstructions: [r1, r2, r3],
        })
    }
}

fn encoded(symbol: &Symbol) -> &Gradient {
    match &symbol.payload {
        Payload::Encoded(g) => g,
        Payload::Replicas(_) => panic!("linear check expects encoded symbols"),
    }
}

impl LinearCode {
    /// [`LinearCode::check`] over symbols produced by [`LinearCode::encode`].
    pub fn check_symbols(&self, c1: &Symbol, c2: &Symbol, c3: &Symbol, tol: f64) -> Result<LinearCheck> {
        self.check(encoded(c1), encoded(c2), encoded(c3), tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Role};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn workers(ids: impl IntoIterator<Item = usize>) -> BTreeSet<WorkerId> {
        ids.into_iter().map(WorkerId).collect()
    }

    fn g(v: &[f64]) -> Gradient {
        Gradient::new(v.to_vec())
    }

    fn rng(seed: u64) -> StreamRng {
        stream(seed, 0, 0, Role::Assign)
    }

    fn check_balanced(a: &Assignment, active: &BTreeSet<WorkerId>) {
        for (_, ws) in a.iter() {
            let distinct: BTreeSet<_> = ws.iter().collect();
            assert_eq!(distinct.len(), ws.len());
            assert!(ws.iter().all(|w| active.contains(w)));
        }
        let loads = a.loads();
        let counts: Vec<usize> = active
            .iter()
            .map(|w| loads.get(w).map_or(0, Vec::len))
            .collect();
        let max = *counts.iter().max().unwrap();
        let min = *counts.iter().min().unwrap();
        assert!(max - min <= 1, "loads {counts:?}");
    }

    #[test]
    fn three_workers_degree_two_is_a_rotation() {
        let active = workers([1, 2, 3]);
        let a = replicate_assign(3, &active, 2, &mut rng(0)).unwrap();
        check_balanced(&a, &active);
        assert!(a.loads().values().all(|pts| pts.len() == 2));
        let sets: BTreeSet<BTreeSet<WorkerId>> =
            a.iter().map(|(_, ws)| ws.iter().copied().collect()).collect();
        assert_eq!(sets.len(), 3);
    }

    #[test]
    fn degree_one_partitions_points() {
        let active = workers(0..4);
        let a = replicate_assign(10, &active, 1, &mut rng(1)).unwrap();
        check_balanced(&a, &active);
        assert_eq!(a.total_copies(), 10);
    }

    #[test]
    fn ten_points_five_workers_degree_three() {
        let active = workers(0..5);
        let a = replicate_assign(10, &active, 3, &mut rng(2)).unwrap();
        for (_, ws) in a.iter() {
            assert_eq!(ws.iter().collect::<BTreeSet<_>>().len(), 3);
        }
        assert!(a.loads().values().all(|pts| pts.len() == 6));
        assert_eq!(a.loads().len(), 5);
    }

    #[test]
    fn assignment_errors() {
        let active = workers(0..2);
        assert!(matches!(
            replicate_assign(4, &active, 3, &mut rng(0)),
            Err(Error::InsufficientWorkers { .. })
        ));
        assert!(replicate_assign(0, &active, 1, &mut rng(0)).is_err());
    }

    #[test]
    fn assignment_is_seed_deterministic() {
        let active = workers(0..7);
        let a = replicate_assign(13, &active, 3, &mut rng(5)).unwrap();
        let b = replicate_assign(13, &active, 3, &mut rng(5)).unwrap();
        assert_eq!(a, b);
    }

    fn copies_of(entries: &[(usize, usize, Gradient)]) -> Copies {
        let mut c = Copies::new();
        for (p, w, grad) in entries {
            c.entry(*p).or_default().insert(WorkerId(*w), grad.clone());
        }
        c
    }

    #[test]
    fn detect_unanimous_and_mismatch() {
        let r = detect(copies_of(&[(0, 1, g(&[1.0])), (0, 2, g(&[1.0]))])).unwrap();
        assert!(r.suspects.is_empty());
        let r = detect(copies_of(&[(0, 1, g(&[1.0])), (0, 2, g(&[1.5]))])).unwrap();
        assert_eq!(r.suspects, BTreeSet::from([0]));
        assert_eq!(r.copies[&0].len(), 2);
    }

    #[test]
    fn detect_distinguishes_signed_zero() {
        let r = detect(copies_of(&[(0, 1, g(&[0.0])), (0, 2, g(&[-0.0]))])).unwrap();
        assert_eq!(r.suspects.len(), 1);
    }

    #[test]
    fn detect_rejects_single_copy() {
        assert!(matches!(
            detect(copies_of(&[(4, 1, g(&[1.0]))])),
            Err(Error::SingleCopyPoint(4))
        ));
    }

    #[test]
    fn detect_finds_exactly_the_tampered_points() {
        let active = workers(0..4);
        let a = replicate_assign(20, &active, 2, &mut rng(3)).unwrap();
        let liar = WorkerId(2);
        let mut tampered = BTreeSet::new();
        let mut entries = Vec::new();
        for (p, ws) in a.iter() {
            let honest = g(&[p as f64, 1.0]);
            for w in ws {
                let lie = *w == liar && tampered.len() < 3 && !tampered.contains(&p);
                if lie {
                    tampered.insert(p);
                    entries.push((p, w.0, g(&[-(p as f64), 1.0 + p as f64])));
                } else {
                    entries.push((p, w.0, honest.clone()));
                }
            }
        }
        assert_eq!(tampered.len(), 3);
        let r = detect(copies_of(&entries)).unwrap();
        assert_eq!(r.suspects, tampered);
    }

    #[test]
    fn reactive_assign_adds_the_missing_worker() {
        let active = workers([1, 2, 3]);
        let mut a = replicate_assign(3, &active, 2, &mut rng(0)).unwrap();
        a.assignees[2] = vec![WorkerId(2), WorkerId(3)];
        let out = reactive_assign(&BTreeSet::from([2]), &a, 1, &active, &mut rng(9)).unwrap();
        assert_eq!(out.assignees(2), &[WorkerId(2), WorkerId(3), WorkerId(1)]);
        assert_eq!(out.assignees(0), a.assignees(0));
        assert_eq!(out.assignees(1), a.assignees(1));
    }

    #[test]
    fn reactive_assign_without_suspects_is_identity() {
        let active = workers(0..5);
        let a = replicate_assign(6, &active, 3, &mut rng(4)).unwrap();
        let out = reactive_assign(&BTreeSet::new(), &a, 2, &active, &mut rng(4)).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn reactive_assign_reaches_all_seven_workers() {
        let active = workers(0..7);
        let a = replicate_assign(5, &active, 4, &mut rng(6)).unwrap();
        let out = reactive_assign(&BTreeSet::from([3]), &a, 3, &active, &mut rng(6)).unwrap();
        let distinct: BTreeSet<_> = out.assignees(3).iter().collect();
        assert_eq!(distinct.len(), 7);
        assert_eq!(out.degree(), 4);
    }

    #[test]
    fn reactive_assign_insufficient_workers() {
        let active = workers(0..3);
        let a = replicate_assign(2, &active, 2, &mut rng(0)).unwrap();
        assert!(matches!(
            reactive_assign(&BTreeSet::from([0]), &a, 2, &active, &mut rng(0)),
            Err(Error::InsufficientWorkers { .. })
        ));
    }

    fn by_worker(entries: &[(usize, Gradient)]) -> BTreeMap<WorkerId, Gradient> {
        entries.iter().map(|(w, v)| (WorkerId(*w), v.clone())).collect()
    }

    #[test]
    fn identify_forced_majority() {
        let (value, liars) =
            identify(&by_worker(&[(1, g(&[1.0])), (2, g(&[1.0])), (3, g(&[-1.0]))]), 1).unwrap();
        assert!(value.same_bits(&g(&[1.0])));
        assert_eq!(liars, workers([3]));
    }

    #[test]
    fn identify_no_fault() {
        let (value, liars) =
            identify(&by_worker(&[(1, g(&[2.0])), (2, g(&[2.0])), (3, g(&[2.0]))]), 1).unwrap();
        assert!(value.same_bits(&g(&[2.0])));
        assert!(liars.is_empty());
    }

    #[test]
    fn identify_two_distinct_liars() {
        let honest = g(&[0.5, -0.25]);
        let copies = by_worker(&[
            (0, honest.clone()),
            (1, g(&[9.0, 9.0])),
            (2, honest.clone()),
            (3, g(&[-0.5, 0.25])),
            (4, honest.clone()),
        ]);
        let (value, liars) = identify(&copies, 2).unwrap();
        assert!(value.same_bits(&honest));
        assert_eq!(liars, workers([1, 3]));
    }

    #[test]
    fn identify_errors() {
        let two = by_worker(&[(0, g(&[1.0])), (1, g(&[2.0]))]);
        assert!(matches!(identify(&two, 1), Err(Error::NoMajority { .. })));
        let split = by_worker(&[(0, g(&[1.0])), (1, g(&[2.0])), (2, g(&[3.0]))]);
        assert!(matches!(identify(&split, 1), Err(Error::NoMajority { .. })));
    }

    #[test]
    fn detection_is_complete_and_identification_safe() {
        let mut r = ChaCha8Rng::seed_from_u64(77);
        for scenario in 0..1000u64 {
            let n = r.gen_range(3..10);
            let f = r.gen_range(1..=(n - 1) / 2);
            let active = workers(0..n);
            let mut ids: Vec<usize> = (0..n).collect();
            ids.shuffle(&mut r);
            let byz: BTreeSet<WorkerId> = ids[..r.gen_range(0..=f)].iter().map(|i| WorkerId(*i)).collect();
            let m = r.gen_range(1..12);
            let a = replicate_assign(m, &active, f + 1, &mut stream(scenario, 0, 0, Role::Assign)).unwrap();
            let honest: Vec<Gradient> = (0..m).map(|_| g(&[r.gen_range(-1.0..1.0), r.gen()])).collect();
            let lie = |p: usize, w: WorkerId, r: &mut ChaCha8Rng| -> Gradient {
                if byz.contains(&w) && r.gen_bool(0.5) {
                    g(&[honest[p].as_slice()[0] + r.gen_range(0.1..2.0), 0.0])
                } else {
                    honest[p].clone()
                }
            };
            let mut copies = Copies::new();
            let mut tampered = BTreeSet::new();
            for (p, ws) in a.iter() {
                for w in ws {
                    let v = lie(p, *w, &mut r);
                    if !v.same_bits(&honest[p]) {
                        tampered.insert(p);
                    }
                    copies.entry(p).or_default().insert(*w, v);
                }
            }
            let report = detect(copies).unwrap();
            assert_eq!(report.suspects, tampered, "scenario {scenario}");

            let grown = reactive_assign(&report.suspects, &a, f, &active, &mut stream(scenario, 0, 0, Role::Reactive)).unwrap();
            let mut extra = Copies::new();
            for &p in &report.suspects {
                for w in &grown.assignees(p)[f + 1..] {
                    extra.entry(p).or_default().insert(*w, lie(p, *w, &mut r));
                }
            }
            let ident = identify_all(&report, &extra, f).unwrap();
            assert!(ident.identified.is_subset(&byz), "scenario {scenario}");
            for (p, v) in &ident.resolved {
                assert!(v.same_bits(&honest[*p]));
            }
        }
    }

    #[test]
    fn soundness_without_tampering() {
        let active = workers(0..5);
        let a = replicate_assign(8, &active, 3, &mut rng(8)).unwrap();
        let mut copies = Copies::new();
        for (p, ws) in a.iter() {
            for w in ws {
                copies.entry(p).or_default().insert(*w, g(&[p as f64]));
            }
        }
        let report = detect(copies).unwrap();
        assert!(report.suspects.is_empty());
        let ident = identify_all(&report, &Copies::new(), 2).unwrap();
        assert!(ident.identified.is_empty());
    }

    fn encode_all(code: &LinearCode, g1: &Gradient, g2: &Gradient, g3: &Gradient) -> [Gradient; 3] {
        let sym = |role, a, b| match code.encode(role, a, b).unwrap().payload {
            Payload::Encoded(v) => v,
            Payload::Replicas(_) => unreachable!(),
        };
        [
            sym(LinearRole::One, g1, g2),
            sym(LinearRole::Two, g2, g3),
            sym(LinearRole::Three, g3, g1),
        ]
    }

    #[test]
    fn linear_encode_scalars() {
        let code = LinearCode::new(3, 1).unwrap();
        let [c1, c2, c3] = encode_all(&code, &g(&[1.0]), &g(&[2.0]), &g(&[3.0]));
        assert_eq!(c1.as_slice(), &[5.0]);
        assert_eq!(c2.as_slice(), &[1.0]);
        assert_eq!(c3.as_slice(), &[-7.0]);

        let z = g(&[0.0, 0.0]);
        for c in encode_all(&code, &z, &z, &z) {
            assert!(c.as_slice().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn linear_encode_is_componentwise() {
        let code = LinearCode::new(3, 1).unwrap();
        let (g1, g2, g3) = (g(&[1.0, -4.0]), g(&[2.0, 0.5]), g(&[3.0, 7.0]));
        let vector = encode_all(&code, &g1, &g2, &g3);
        for k in 0..2 {
            let scalar = encode_all(
                &code,
                &g(&[g1.as_slice()[k]]),
                &g(&[g2.as_slice()[k]]),
                &g(&[g3.as_slice()[k]]),
            );
            for (v, s) in vector.iter().zip(&scalar) {
                assert_eq!(v.as_slice()[k], s.as_slice()[0]);
            }
        }
    }

    #[test]
    fn linear_code_configuration() {
        assert!(matches!(LinearCode::new(4, 1), Err(Error::WrongConfiguration { n: 4, f: 1 })));
        assert!(matches!(LinearCode::new(3, 0), Err(Error::WrongConfiguration { .. })));
    }

    #[test]
    fn linear_check_examples() {
        let code = LinearCode::new(3, 1).unwrap();
        let honest = code.check(&g(&[5.0]), &g(&[1.0]), &g(&[-7.0]), 1e-9).unwrap();
        assert!(!honest.detected);
        assert_eq!(honest.sum.unwrap().as_slice(), &[6.0]);

        let bad = code.check(&g(&[5.0]), &g(&[1.0]), &g(&[-6.0]), 1e-9).unwrap();
        assert!(bad.detected);
        assert!(bad.sum.is_none());
        let r: Vec<f64> = bad.reconstructions.iter().map(|v| v.as_slice()[0]).collect();
        assert_eq!(r, vec![6.0, 5.0, 5.5]);

        let z = g(&[0.0]);
        let zero = code.check(&z, &z, &z, 1e-9).unwrap();
        assert!(!zero.detected);
        assert_eq!(zero.sum.unwrap().as_slice(), &[0.0]);
    }

    proptest! {
        #[test]
        fn replicate_assign_is_balanced(m in 1usize..40, n in 1usize..12, seed in any::<u64>(), deg_frac in 0.0f64..1.0) {
            let degree = 1 + ((n - 1) as f64 * deg_frac) as usize;
            let active = workers(0..n);
            let a = replicate_assign(m, &active, degree, &mut rng(seed)).unwrap();
            prop_assert_eq!(a.num_points(), m);
            prop_assert_eq!(a.total_copies(), m * degree);
            check_balanced(&a, &active);
        }

        #[test]
        fn linear_reconstructions_agree(
            v in prop::collection::vec(-1e3f64..1e3, 9),
        ) {
            let code = LinearCode::new(3, 1).unwrap();
            let (g1, g2, g3) = (g(&v[0..3]), g(&v[3..6]), g(&v[6..9]));
            let [c1, c2, c3] = encode_all(&code, &g1, &g2, &g3);
            let check = code.check(&c1, &c2, &c3, 1e-9).unwrap();
            for r in &check.reconstructions {
                for k in 0..3 {
                    let sum = g1.as_slice()[k] + g2.as_slice()[k] + g3.as_slice()[k];
                    prop_assert!((r.as_slice()[k] - sum).abs() <= 1e-9);
                }
            }
            prop_assert!(!check.detected);
        }
    }
}
