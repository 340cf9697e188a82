//! Exact-rational feasibility LPs.
//!
//! A [`LinearProgram`] is a system of equalities and `<=` rows over
//! non-negative variables. [`solve_vertex`] runs a phase-1 simplex with
//! Bland's rule and returns a basic feasible solution. Two reference
//! enumerators are provided for cross-checking: a brute-force scan of
//! column subsets and a breadth-first walk over the graph of feasible bases.

use std::collections::{BTreeSet, HashSet, VecDeque};

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub terms: Vec<(usize, Rational)>,
    pub rhs: Rational,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    num_vars: usize,
    equalities: Vec<Constraint>,
    inequalities: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    /// Value of each declared variable.
    pub values: Vec<Rational>,
    /// Basic columns, sorted. Indices `>= num_vars` are slacks.
    pub basis: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    Feasible(Vertex),
    Infeasible,
}

impl LpOutcome {
    pub fn vertex(self) -> Option<Vertex> {
        match self {
            LpOutcome::Feasible(v) => Some(v),
            LpOutcome::Infeasible => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, LpOutcome::Feasible(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LpError {
    #[error("vertex enumeration visited more than {0} bases")]
    BudgetExceeded(usize),
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.equalities.len() + self.inequalities.len()
    }

    pub fn equalities(&self) -> &[Constraint] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[Constraint] {
        &self.inequalities
    }

    fn checked(&self, terms: Vec<(usize, Rational)>, rhs: Rational) -> Constraint {
        for (v, _) in &terms {
            assert!(*v < self.num_vars, "variable {v} not declared (have {})", self.num_vars);
        }
        Constraint { terms, rhs }
    }

    /// Adds `sum terms = rhs`.
    pub fn add_eq(&mut self, terms: Vec<(usize, Rational)>, rhs: Rational) {
        let c = self.checked(terms, rhs);
        self.equalities.push(c);
    }

    /// Adds `sum terms <= rhs`.
    pub fn add_le(&mut self, terms: Vec<(usize, Rational)>, rhs: Rational) {
        let c = self.checked(terms, rhs);
        self.inequalities.push(c);
    }

    /// Exact check of every row and of non-negativity.
    pub fn is_satisfied_by(&self, values: &[Rational]) -> bool {
        if values.len() != self.num_vars || values.iter().any(Rational::is_negative) {
            return false;
        }
        let lhs = |c: &Constraint| c.terms.iter().map(|(v, a)| a * &values[*v]).sum::<Rational>();
        self.equalities.iter().all(|c| lhs(c) == c.rhs) && self.inequalities.iter().all(|c| lhs(c) <= c.rhs)
    }

    /// Dense standard form `[A | I_slack] x = b` (rows: equalities, then
    /// inequalities with one slack column each).
    fn standard_form(&self) -> (Vec<Vec<Rational>>, Vec<Rational>) {
        let cols = self.num_vars + self.inequalities.len();
        let mut rows = Vec::with_capacity(self.num_rows());
        let mut rhs = Vec::with_capacity(self.num_rows());
        for c in &self.equalities {
            let mut row = vec![Rational::zero(); cols];
            for (v, a) in &c.terms {
                row[*v] += a;
            }
            rows.push(row);
            rhs.push(c.rhs.clone());
        }
        for (k, c) in self.inequalities.iter().enumerate() {
            let mut row = vec![Rational::zero(); cols];
            for (v, a) in &c.terms {
                row[*v] += a;
            }
            row[self.num_vars + k] = Rational::one();
            rows.push(row);
            rhs.push(c.rhs.clone());
        }
        (rows, rhs)
    }
}

/// Dense simplex tableau; the last entry of each row is the right-hand side.
#[derive(Debug, Clone)]
struct Tableau {
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> &Rational {
        &self.rows[r][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize, objective: Option<&mut Vec<Rational>>) {
        let inv = self.rows[r][c].recip();
        for x in self.rows[r].iter_mut() {
            if !x.is_zero() {
                *x *= &inv;
            }
        }
        let pivot_row = std::mem::take(&mut self.rows[r]);
        let support: Vec<usize> = (0..=self.cols).filter(|&k| !pivot_row[k].is_zero()).collect();
        let eliminate = |row: &mut Vec<Rational>| {
            let f = row[c].clone();
            if f.is_zero() {
                return;
            }
            for &k in &support {
                row[k] -= &f * &pivot_row[k];
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        if let Some(obj) = objective {
            eliminate(obj);
        }
        self.rows[r] = pivot_row;
        self.basis[r] = c;
    }

    /// Bland ratio test on column `c`: minimum `b_r / a_rc` over `a_rc > 0`,
    /// ties to the lowest basic variable index.
    fn ratio_row(&self, c: usize) -> Option<usize> {
        let mut best: Option<(usize, Rational)> = None;
        for (r, row) in self.rows.iter().enumerate() {
            if !row[c].is_positive() {
                continue;
            }
            let ratio = &row[self.cols] / &row[c];
            let better = match &best {
                None => true,
                Some((br, bv)) => ratio < *bv || (ratio == *bv && self.basis[r] < self.basis[*br]),
            };
            if better {
                best = Some((r, ratio));
            }
        }
        best.map(|(r, _)| r)
    }

    fn values(&self, n: usize) -> Vec<Rational> {
        let mut values = vec![Rational::zero(); n];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < n {
                values[b] = self.rhs(r).clone();
            }
        }
        values
    }

    fn sorted_basis(&self) -> Vec<usize> {
        let mut b = self.basis.clone();
        b.sort_unstable();
        b
    }
}

/// Phase 1: returns a feasible tableau over structural and slack columns,
/// with redundant rows removed, or `None` when the system is infeasible.
fn phase_one(lp: &LinearProgram) -> Option<Tableau> {
    let (mut rows, mut rhs) = lp.standard_form();
    let real_cols = lp.num_vars + lp.inequalities.len();
    let n_eq = lp.equalities.len();
    let mut basis = vec![usize::MAX; rows.len()];
    let mut needs_artificial = Vec::new();
    for r in 0..rows.len() {
        if rhs[r].is_negative() {
            for x in rows[r].iter_mut() {
                *x = -&*x;
            }
            rhs[r] = -&rhs[r];
        }
        if r >= n_eq && rows[r][lp.num_vars + r - n_eq].is_positive() {
            basis[r] = lp.num_vars + r - n_eq;
        } else {
            needs_artificial.push(r);
        }
    }
    let cols = real_cols + needs_artificial.len();
    let mut tableau_rows = Vec::with_capacity(rows.len());
    for (r, mut row) in rows.into_iter().enumerate() {
        row.resize(cols, Rational::zero());
        row.push(rhs[r].clone());
        tableau_rows.push(row);
    }
    for (k, &r) in needs_artificial.iter().enumerate() {
        tableau_rows[r][real_cols + k] = Rational::one();
        basis[r] = real_cols + k;
    }
    let mut t = Tableau {
        rows: tableau_rows,
        basis,
        cols,
    };

    // Reduced costs of "minimize sum of artificials"; last entry is -objective.
    let mut obj = vec![Rational::zero(); cols + 1];
    for &r in &needs_artificial {
        for (k, x) in t.rows[r].iter().enumerate() {
            if k < real_cols || k == cols {
                obj[k] -= x;
            }
        }
    }
    loop {
        let Some(c) = (0..real_cols).find(|&c| obj[c].is_negative()) else {
            break;
        };
        let r = t.ratio_row(c).expect("phase-1 objective is bounded below");
        t.pivot(r, c, Some(&mut obj));
    }
    if !obj[cols].is_zero() {
        return None;
    }

    // Drive zero-valued artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= real_cols {
            match (0..real_cols).find(|&c| !t.rows[r][c].is_zero()) {
                Some(c) => {
                    t.pivot(r, c, None);
                    r += 1;
                }
                None => {
                    t.rows.remove(r);
                    t.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }
    for row in t.rows.iter_mut() {
        let b = row.pop().expect("rhs present");
        row.truncate(real_cols);
        row.push(b);
    }
    t.cols = real_cols;
    Some(t)
}

/// Finds a vertex of `{x >= 0 : lp}` or reports infeasibility.
pub fn solve_vertex(lp: &LinearProgram) -> LpOutcome {
    match phase_one(lp) {
        Some(t) => LpOutcome::Feasible(Vertex {
            values: t.values(lp.num_vars),
            basis: t.sorted_basis(),
        }),
        None => LpOutcome::Infeasible,
    }
}

/// All distinct vertices, found by walking feasibility-preserving pivots
/// from the phase-1 basis. Errors once more than `max_bases` bases are seen.
pub fn enumerate_vertices(lp: &LinearProgram, max_bases: usize) -> Result<Vec<Vec<Rational>>, LpError> {
    let Some(start) = phase_one(lp) else {
        return Ok(Vec::new());
    };
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut vertices = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.sorted_basis());
    queue.push_back(start);
    while let Some(t) = queue.pop_front() {
        vertices.insert(t.values(lp.num_vars));
        let basic: HashSet<usize> = t.basis.iter().copied().collect();
        for c in (0..t.cols).filter(|c| !basic.contains(c)) {
            let mut rows: Vec<usize> = Vec::new();
            let mut min: Option<Rational> = None;
            for (r, row) in t.rows.iter().enumerate() {
                if row[c].is_positive() {
                    let ratio = &row[t.cols] / &row[c];
                    match &min {
                        Some(m) if ratio > *m => {}
                        Some(m) if ratio == *m => rows.push(r),
                        _ => {
                            min = Some(ratio);
                            rows.clear();
                            rows.push(r);
                        }
                    }
                }
            }
            // Degenerate rows admit pivots on negative entries too.
            for (r, row) in t.rows.iter().enumerate() {
                if row[c].is_negative() && row[t.cols].is_zero() {
                    rows.push(r);
                }
            }
            for r in rows {
                let mut next_basis = t.basis.clone();
                next_basis[r] = c;
                next_basis.sort_unstable();
                if seen.contains(&next_basis) {
                    continue;
                }
                if seen.len() >= max_bases {
                    return Err(LpError::BudgetExceeded(max_bases));
                }
                seen.insert(next_basis);
                let mut next = t.clone();
                next.pivot(r, c, None);
                queue.push_back(next);
            }
        }
    }
    Ok(vertices.into_iter().collect())
}

/// Brute force over all column subsets of the standard form: every basic
/// feasible solution, projected on the declared variables, deduplicated.
/// Exponential; meant for systems with a handful of variables.
pub fn basic_feasible_solutions(lp: &LinearProgram) -> Vec<Vec<Rational>> {
    let (a, b) = lp.standard_form();
    let Some((a, b)) = independent_rows(a, b) else {
        return Vec::new();
    };
    let k = a.len();
    let cols = lp.num_vars + lp.inequalities.len();
    let mut out = BTreeSet::new();
    if k == 0 {
        out.insert(vec![Rational::zero(); lp.num_vars]);
        return out.into_iter().collect();
    }
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        if let Some(sol) = solve_square(&a, &b, &subset) {
            if sol.iter().all(|x| !x.is_negative()) {
                let mut full = vec![Rational::zero(); cols];
                for (idx, &c) in subset.iter().enumerate() {
                    full[c] = sol[idx].clone();
                }
                full.truncate(lp.num_vars);
                out.insert(full);
            }
        }
        if !next_combination(&mut subset, cols) {
            break;
        }
    }
    out.into_iter().collect()
}

fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    for i in (0..k).rev() {
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Row-reduces `[a | b]`; returns a full-row-rank equivalent system, or
/// `None` when it is inconsistent.
fn independent_rows(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<(Vec<Vec<Rational>>, Vec<Rational>)> {
    let cols = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..a.len()).find(|&r| !a[r][c].is_zero()) else {
            continue;
        };
        a.swap(rank, p);
        b.swap(rank, p);
        let inv = a[rank][c].recip();
        for x in a[rank].iter_mut() {
            *x *= &inv;
        }
        b[rank] *= &inv;
        for r in 0..a.len() {
            if r != rank && !a[r][c].is_zero() {
                let f = a[r][c].clone();
                for k in 0..cols {
                    let d = &f * &a[rank][k];
                    a[r][k] -= d;
                }
                let d = &f * &b[rank];
                b[r] -= d;
            }
        }
        rank += 1;
    }
    if b[rank..].iter().any(|x| !x.is_zero()) {
        return None;
    }
    a.truncate(rank);
    b.truncate(rank);
    Some((a, b))
}

/// Solves the square system on the chosen columns by Gaussian elimination.
fn solve_square(a: &[Vec<Rational>], b: &[Rational], columns: &[usize]) -> Option<Vec<Rational>> {
    let k = columns.len();
    let mut m: Vec<Vec<Rational>> = (0..k)
        .map(|r| {
            let mut row: Vec<Rational> = columns.iter().map(|&c| a[r][c].clone()).collect();
            row.push(b[r].clone());
            row
        })
        .collect();
    for c in 0..k {
        let p = (c..k).find(|&r| !m[r][c].is_zero())?;
        m.swap(c, p);
        let inv = m[c][c].recip();
        for x in m[c].iter_mut() {
            *x *= &inv;
        }
        for r in 0..k {
            if r != c && !m[r][c].is_zero() {
                let f = m[r][c].clone();
                for j in c..=k {
                    let d = &f * &m[c][j];
                    m[r][j] -= d;
                }
            }
        }
    }
    Some(m.into_iter().map(|mut row| row.pop().expect("rhs")).collect())
}

/// Bipartite graph of machines and fractionally assigned jobs for an
/// assignment matrix `x[job][machine]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FractionalGraph {
    pub machines: usize,
    /// Fractional jobs in increasing order.
    pub jobs: Vec<usize>,
    /// `(job, machine)` with `0 < x < 1`.
    pub edges: Vec<(usize, usize)>,
}

impl FractionalGraph {
    pub fn from_assignment(x: &[Vec<Rational>], machines: usize) -> Self {
        let one = Rational::one();
        let mut jobs = Vec::new();
        let mut edges = Vec::new();
        for (j, row) in x.iter().enumerate() {
            let frac: Vec<usize> = (0..machines)
                .filter(|&i| row[i].is_positive() && row[i] < one)
                .collect();
            if !frac.is_empty() {
                jobs.push(j);
                edges.extend(frac.into_iter().map(|i| (j, i)));
            }
        }
        FractionalGraph { machines, jobs, edges }
    }

    fn job_slot(&self, job: usize) -> usize {
        self.machines + self.jobs.binary_search(&job).expect("edge job is a node")
    }

    /// Connected components as `(machines, jobs)`, including isolated machines.
    pub fn components(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let nodes = self.machines + self.jobs.len();
        let mut parent: Vec<usize> = (0..nodes).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let nx = p[y];
                p[y] = r;
                y = nx;
            }
            r
        }
        for &(j, i) in &self.edges {
            let a = find(&mut parent, self.job_slot(j));
            let b = find(&mut parent, i);
            parent[a] = b;
        }
        let mut groups: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
        for v in 0..nodes {
            let root = find(&mut parent, v);
            let entry = groups.entry(root).or_default();
            if v < self.machines {
                entry.0.push(v);
            } else {
                entry.1.push(self.jobs[v - self.machines]);
            }
        }
        groups.into_values().collect()
    }

    /// A graph is a forest iff `edges = nodes - components`.
    pub fn is_forest(&self) -> bool {
        let nodes = self.machines + self.jobs.len();
        self.edges.len() + self.components().len() == nodes
    }

    /// Matching that saturates every fractional job, each job going to a
    /// machine it touches. `None` when Hall's condition fails.
    pub fn job_injection(&self) -> Option<Vec<(usize, usize)>> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.jobs.len()];
        for &(j, i) in &self.edges {
            adj[self.job_slot(j) - self.machines].push(i);
        }
        let mut owner: Vec<Option<usize>> = vec![None; self.machines];
        fn augment(u: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
            for &i in &adj[u] {
                if seen[i] {
                    continue;
                }
                seen[i] = true;
                if owner[i].is_none_or(|w| augment(w, adj, owner, seen)) {
                    owner[i] = Some(u);
                    return true;
                }
            }
            false
        }
        for u in 0..self.jobs.len() {
            let mut seen = vec![false; self.machines];
            if !augment(u, &adj, &mut owner, &mut seen) {
                return None;
            }
        }
        let mut out: Vec<(usize, usize)> = owner
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.map(|u| (self.jobs[u], i)))
            .collect();
        out.sort_unstable();
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;
    use proptest::prelude::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn single_variable_pinned() {
        let mut lp = LinearProgram::new(1);
        lp.add_le(vec![(0, r(1))], r(1));
        lp.add_eq(vec![(0, r(1))], r(1));
        let v = solve_vertex(&lp).vertex().unwrap();
        assert_eq!(v.values, vec![r(1)]);
    }

    #[test]
    fn capacity_too_small_is_infeasible() {
        let mut lp = LinearProgram::new(2);
        lp.add_eq(vec![(0, r(1)), (1, r(1))], r(1));
        lp.add_le(vec![(0, r(1))], q(1, 2));
        lp.add_le(vec![(1, r(1))], q(1, 3));
        assert_eq!(solve_vertex(&lp), LpOutcome::Infeasible);
        assert!(basic_feasible_solutions(&lp).is_empty());
    }

    #[test]
    fn negative_rhs_rows() {
        // x0 >= 2 written as -x0 <= -2, x0 <= 3
        let mut lp = LinearProgram::new(1);
        lp.add_le(vec![(0, r(-1))], r(-2));
        lp.add_le(vec![(0, r(1))], r(3));
        let v = solve_vertex(&lp).vertex().unwrap();
        assert!(lp.is_satisfied_by(&v.values));
        let mut verts = basic_feasible_solutions(&lp);
        verts.sort();
        assert_eq!(verts, vec![vec![r(2)], vec![r(3)]]);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.add_eq(vec![(0, r(1)), (1, r(1))], r(2));
        lp.add_eq(vec![(0, r(2)), (1, r(2))], r(4));
        let v = solve_vertex(&lp).vertex().unwrap();
        assert!(lp.is_satisfied_by(&v.values));
        assert_eq!(basic_feasible_solutions(&lp).len(), 2);
        assert_eq!(enumerate_vertices(&lp, 100).unwrap().len(), 2);
    }

    #[test]
    fn fractional_graph_shapes() {
        let integral = vec![vec![r(1), r(0)], vec![r(0), r(1)]];
        let g = FractionalGraph::from_assignment(&integral, 2);
        assert!(g.jobs.is_empty() && g.edges.is_empty());
        assert!(g.is_forest());
        assert_eq!(g.job_injection(), Some(vec![]));

        let split = vec![vec![r(1), r(0)], vec![q(1, 2), q(1, 2)]];
        let g = FractionalGraph::from_assignment(&split, 2);
        assert_eq!(g.jobs, vec![1]);
        assert_eq!(g.edges, vec![(1, 0), (1, 1)]);
        assert!(g.is_forest());
        assert_eq!(g.job_injection(), Some(vec![(1, 0)]));

        let cycle = vec![vec![q(1, 2), q(1, 2)], vec![q(1, 2), q(1, 2)]];
        let g = FractionalGraph::from_assignment(&cycle, 2);
        assert!(!g.is_forest());
        assert_eq!(g.components().len(), 1);

        let crowded = vec![vec![q(1, 2), q(1, 2), r(0)]; 3];
        let g = FractionalGraph::from_assignment(&crowded, 3);
        assert_eq!(g.job_injection(), None);
    }

    fn small_lp() -> impl Strategy<Value = LinearProgram> {
        (1usize..=4, 0usize..=2, 1usize..=3).prop_flat_map(|(n, eqs, les)| {
            let coef = -3i64..=4;
            let row = proptest::collection::vec(coef, n);
            (
                Just(n),
                proptest::collection::vec((row.clone(), 0i64..=6), eqs),
                proptest::collection::vec((row, -2i64..=8), les),
            )
                .prop_map(|(n, eqs, les)| {
                    let mut lp = LinearProgram::new(n);
                    let terms = |row: Vec<i64>| row.into_iter().enumerate().map(|(v, a)| (v, r(a))).collect();
                    for (row, b) in eqs {
                        lp.add_eq(terms(row), r(b));
                    }
                    for (row, b) in les {
                        lp.add_le(terms(row), r(b));
                    }
                    // keep the polyhedron bounded
                    lp.add_le((0..n).map(|v| (v, r(1))).collect(), r(10));
                    lp
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn simplex_matches_brute_force(lp in small_lp()) {
            let brute = basic_feasible_solutions(&lp);
            match solve_vertex(&lp) {
                LpOutcome::Feasible(v) => {
                    prop_assert!(lp.is_satisfied_by(&v.values));
                    prop_assert!(brute.contains(&v.values));
                }
                LpOutcome::Infeasible => prop_assert!(brute.is_empty()),
            }
            let walked = enumerate_vertices(&lp, 100_000).unwrap();
            prop_assert_eq!(walked, brute);
        }
    }
}
