//! Local-independence graphs, allowed trails, δ-separation and the
//! eliminability criterion.
//!
//! A trail is a simple path that may traverse edges in either direction.
//! Only interior vertices can block: the target of a δ-separation query is
//! always in the blocking set, so counting endpoints would block everything.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk graph description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub unobserved_order: Vec<String>,
    #[serde(default = "default_x")]
    pub x: String,
    #[serde(default = "default_y")]
    pub y: String,
    #[serde(default = "default_a")]
    pub a: String,
}

fn default_x() -> String {
    "Nx".into()
}
fn default_y() -> String {
    "Ny".into()
}
fn default_a() -> String {
    "Na".into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    names: Vec<String>,
    out: Vec<Vec<bool>>,
    pub x: usize,
    pub y: usize,
    pub a: usize,
    /// `U_1, …, U_K`.
    pub order: Vec<usize>,
}

impl Graph {
    pub fn from_spec(spec: &GraphSpec) -> Result<Self> {
        let names = spec.nodes.clone();
        let index = |n: &str| -> Result<usize> {
            names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| Error::UnknownNode(n.to_string()))
        };
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate node {n}")));
            }
        }
        let (x, y, a) = (index(&spec.x)?, index(&spec.y)?, index(&spec.a)?);
        if x == y || x == a || y == a {
            return Err(Error::InvalidParameter("x, y and a must be distinct nodes".into()));
        }
        let order = spec
            .unobserved_order
            .iter()
            .map(|n| index(n))
            .collect::<Result<Vec<_>>>()?;
        let mut expected: BTreeSet<usize> = (0..names.len()).collect();
        for o in [x, y, a] {
            expected.remove(&o);
        }
        if order.iter().copied().collect::<BTreeSet<_>>() != expected || order.len() != expected.len() {
            return Err(Error::InvalidParameter(
                "unobserved_order must list every non-observed node exactly once".into(),
            ));
        }
        let mut out = vec![vec![false; names.len()]; names.len()];
        for (s, t) in &spec.edges {
            let (i, j) = (index(s)?, index(t)?);
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop on {s}")));
            }
            out[i][j] = true;
        }
        Ok(Graph { names, out, x, y, a, order })
    }

    pub fn to_spec(&self) -> GraphSpec {
        let mut edges = Vec::new();
        for i in 0..self.len() {
            for j in 0..self.len() {
                if self.out[i][j] {
                    edges.push((self.names[i].clone(), self.names[j].clone()));
                }
            }
        }
        GraphSpec {
            nodes: self.names.clone(),
            edges,
            unobserved_order: self.order.iter().map(|&u| self.names[u].clone()).collect(),
            x: self.names[self.x].clone(),
            y: self.names[self.y].clone(),
            a: self.names[self.a].clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn node(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.out[from][to]
    }

    /// Nodes reachable from `v` along directed edges, excluding `v` unless it
    /// lies on a cycle.
    pub fn descendants(&self, v: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for w in 0..self.len() {
                if self.out[u][w] && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }
}

/// `nodes[0] – nodes[1] – …`; `forward[j]` is true when step `j` uses the
/// edge `nodes[j] → nodes[j+1]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Trail {
    pub nodes: Vec<usize>,
    pub forward: Vec<bool>,
}

impl Trail {
    pub fn is_allowed(&self) -> bool {
        self.forward.last() == Some(&true)
    }

    /// Interior vertex `j` is a collider when both adjacent edges point into it.
    pub fn is_collider(&self, j: usize) -> bool {
        j > 0 && j + 1 < self.nodes.len() && self.forward[j - 1] && !self.forward[j]
    }

    pub fn display<'a>(&'a self, g: &'a Graph) -> TrailDisplay<'a> {
        TrailDisplay { trail: self, graph: g }
    }
}

pub struct TrailDisplay<'a> {
    trail: &'a Trail,
    graph: &'a Graph,
}

impl fmt::Display for TrailDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.trail;
        write!(f, "{}", self.graph.name(t.nodes[0]))?;
        for (j, fw) in t.forward.iter().enumerate() {
            let arrow = if *fw { "→" } else { "←" };
            write!(f, " {arrow} {}", self.graph.name(t.nodes[j + 1]))?;
        }
        Ok(())
    }
}

/// Every simple trail from `from` to `to` whose last edge points into `to`.
pub fn enumerate_allowed_trails(g: &Graph, from: usize, to: usize) -> Vec<Trail> {
    let mut out = Vec::new();
    if from == to {
        return out;
    }
    let mut nodes = vec![from];
    let mut forward = Vec::new();
    let mut on = vec![false; g.len()];
    on[from] = true;
    fn go(
        g: &Graph,
        to: usize,
        nodes: &mut Vec<usize>,
        forward: &mut Vec<bool>,
        on: &mut [bool],
        out: &mut Vec<Trail>,
    ) {
        let v = *nodes.last().unwrap();
        for w in 0..g.len() {
            if on[w] {
                continue;
            }
            for fw in [true, false] {
                let present = if fw { g.has_edge(v, w) } else { g.has_edge(w, v) };
                if !present {
                    continue;
                }
                if w == to {
                    if fw {
                        let mut n = nodes.clone();
                        n.push(w);
                        let mut f = forward.clone();
                        f.push(fw);
                        out.push(Trail { nodes: n, forward: f });
                    }
                    continue;
                }
                nodes.push(w);
                forward.push(fw);
                on[w] = true;
                go(g, to, nodes, forward, on, out);
                on[w] = false;
                nodes.pop();
                forward.pop();
            }
        }
    }
    go(g, to, &mut nodes, &mut forward, &mut on, &mut out);
    out
}

/// Blocked by `c`: some interior non-collider lies in `c`, or some collider
/// has neither itself nor any descendant in `c`.
pub fn is_blocked(g: &Graph, trail: &Trail, c: &BTreeSet<usize>) -> bool {
    (1..trail.nodes.len().saturating_sub(1)).any(|j| {
        let v = trail.nodes[j];
        if trail.is_collider(j) {
            !c.contains(&v) && g.descendants(v).is_disjoint(c)
        } else {
            c.contains(&v)
        }
    })
}

/// First (shortest) allowed trail from some `a ∈ set` to `u` that
/// `{u} ∪ c` leaves open, if any.
pub fn separation_witness(g: &Graph, set: &BTreeSet<usize>, u: usize, c: &BTreeSet<usize>) -> Option<Trail> {
    let mut blocking = c.clone();
    blocking.insert(u);
    set.iter()
        .flat_map(|&a| enumerate_allowed_trails(g, a, u))
        .filter(|t| !is_blocked(g, t, &blocking))
        .min_by(|p, q| p.nodes.len().cmp(&q.nodes.len()).then_with(|| p.cmp(q)))
}

/// `set` is δ-separated from `u` by `c`.
pub fn delta_separated(g: &Graph, set: &BTreeSet<usize>, u: usize, c: &BTreeSet<usize>) -> Result<bool> {
    if set.contains(&u) {
        return Err(Error::InvalidParameter(format!("{} is in the separated set", g.name(u))));
    }
    Ok(separation_witness(g, set, u, c).is_none())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BulletCheck {
    /// Processes required to be locally independent of `U_k`.
    pub targets: Vec<String>,
    pub conditioning: Vec<String>,
    pub satisfied: bool,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnobservedCheck {
    pub node: String,
    /// `(N^y, N^x, U_{>k})` independent of `U_k`.
    pub first: BulletCheck,
    /// `N^a` independent of `U_k`.
    pub second: BulletCheck,
}

impl UnobservedCheck {
    pub fn satisfied(&self) -> bool {
        self.first.satisfied || self.second.satisfied
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EliminabilityReport {
    pub eliminable: bool,
    pub checks: Vec<UnobservedCheck>,
}

impl fmt::Display for EliminabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "eliminable: {}", self.eliminable)?;
        for c in &self.checks {
            writeln!(f, "{}: {}", c.node, if c.satisfied() { "ok" } else { "FAILS" })?;
            for (name, b) in [("first", &c.first), ("second", &c.second)] {
                write!(
                    f,
                    "  {name} bullet: {{{}}} ⟂ {} | {{{}}}: {}",
                    b.targets.join(", "),
                    c.node,
                    b.conditioning.join(", "),
                    b.satisfied
                )?;
                if let Some(w) = &b.witness {
                    write!(f, " (open trail {w})")?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Local independence of each target from `u` given `given`, via
/// δ-separation of `{u}` from the target by `given` minus the target.
fn bullet(g: &Graph, u: usize, targets: &[usize], given: &BTreeSet<usize>) -> BulletCheck {
    let names = |s: &mut dyn Iterator<Item = usize>| s.map(|i| g.name(i).to_string()).collect::<Vec<_>>();
    let source = BTreeSet::from([u]);
    let mut witness = None;
    for &t in targets {
        let mut c = given.clone();
        c.remove(&t);
        if let Some(w) = separation_witness(g, &source, t, &c) {
            witness = Some(w.display(g).to_string());
            break;
        }
    }
    BulletCheck {
        targets: names(&mut targets.iter().copied()),
        conditioning: names(&mut given.iter().copied()),
        satisfied: witness.is_none(),
        witness,
    }
}

/// Checks both bullets for every `U_k` in the graph's order.
pub fn check_eliminability(g: &Graph) -> EliminabilityReport {
    let mut checks = Vec::new();
    for (k, &u) in g.order.iter().enumerate() {
        let later = &g.order[k + 1..];
        let mut given: BTreeSet<usize> = [g.x, g.y, g.a].into_iter().collect();
        given.extend(later);
        let mut first_targets = vec![g.y, g.x];
        first_targets.extend(later);
        checks.push(UnobservedCheck {
            node: g.name(u).to_string(),
            first: bullet(g, u, &first_targets, &given),
            second: bullet(g, u, &[g.a], &given),
        });
    }
    EliminabilityReport {
        eliminable: checks.iter().all(UnobservedCheck::satisfied),
        checks,
    }
}

fn observed_block(edges: &mut Vec<(String, String)>) {
    for (s, t) in [("Nx", "Ny"), ("Ny", "Nx"), ("Nx", "Na"), ("Na", "Nx"), ("Na", "Ny"), ("Ny", "Na")] {
        edges.push((s.into(), t.into()));
    }
}

/// The assumed decision-process graph: `U_1 → {N^x, N^y}`, `U_2 → N^a`, and
/// all edges among the observed processes.
pub fn figure_one() -> GraphSpec {
    let mut edges = vec![
        ("U1".into(), "Nx".into()),
        ("U1".into(), "Ny".into()),
        ("U2".into(), "Na".into()),
    ];
    observed_block(&mut edges);
    GraphSpec {
        nodes: ["Nx", "Ny", "Na", "U1", "U2"].map(String::from).to_vec(),
        edges,
        unobserved_order: vec!["U1".into(), "U2".into()],
        x: default_x(),
        y: default_y(),
        a: default_a(),
    }
}

/// A single unobserved process confounding treatment and outcome.
pub fn confounded_example() -> GraphSpec {
    let mut edges = vec![("U".into(), "Na".into()), ("U".into(), "Ny".into())];
    observed_block(&mut edges);
    GraphSpec {
        nodes: ["Nx", "Ny", "Na", "U"].map(String::from).to_vec(),
        edges,
        unobserved_order: vec!["U".into()],
        x: default_x(),
        y: default_y(),
        a: default_a(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, RngCore};

    fn graph(nodes: &[&str], edges: &[(&str, &str)]) -> Graph {
        // Observed roles go to the first three nodes that are named N*;
        // test motifs use dummy roles when they have none.
        let mut all: Vec<String> = nodes.iter().map(|s| s.to_string()).collect();
        for r in ["Nx", "Ny", "Na"] {
            if !all.iter().any(|n| n == r) {
                all.push(r.into());
            }
        }
        let order = all
            .iter()
            .filter(|n| !["Nx", "Ny", "Na"].contains(&n.as_str()))
            .cloned()
            .collect();
        Graph::from_spec(&GraphSpec {
            nodes: all,
            edges: edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            unobserved_order: order,
            x: default_x(),
            y: default_y(),
            a: default_a(),
        })
        .unwrap()
    }

    fn set(g: &Graph, names: &[&str]) -> BTreeSet<usize> {
        names.iter().map(|n| g.node(n).unwrap()).collect()
    }

    #[test]
    fn direction_of_final_edge() {
        let g = graph(&["a", "b"], &[("a", "b")]);
        let (a, b) = (g.node("a").unwrap(), g.node("b").unwrap());
        assert_eq!(enumerate_allowed_trails(&g, a, b).len(), 1);
        assert!(enumerate_allowed_trails(&g, b, a).is_empty());
    }

    #[test]
    fn chain_and_collider_motifs() {
        let g = graph(&["a", "m", "b", "d"], &[("a", "m"), ("m", "b")]);
        let t = &enumerate_allowed_trails(&g, g.node("a").unwrap(), g.node("b").unwrap())[0];
        assert!(is_blocked(&g, t, &set(&g, &["m"])));
        assert!(!is_blocked(&g, t, &set(&g, &[])));

        let g = graph(&["a", "m", "b", "d"], &[("a", "m"), ("b", "m"), ("m", "d")]);
        let collider = Trail {
            nodes: vec![g.node("a").unwrap(), g.node("m").unwrap(), g.node("b").unwrap()],
            forward: vec![true, false],
        };
        assert!(collider.is_collider(1));
        assert!(is_blocked(&g, &collider, &set(&g, &[])));
        assert!(!is_blocked(&g, &collider, &set(&g, &["m"])));
        // Conditioning on a descendant opens the collider.
        assert!(!is_blocked(&g, &collider, &set(&g, &["d"])));
    }

    #[test]
    fn four_node_truth_table() {
        // a → m ← c → b: m is a collider, c is not.
        let g = graph(&["a", "m", "c", "b"], &[("a", "m"), ("c", "m"), ("c", "b")]);
        let t = Trail {
            nodes: vec![g.node("a").unwrap(), g.node("m").unwrap(), g.node("c").unwrap(), g.node("b").unwrap()],
            forward: vec![true, false, true],
        };
        for (cond, blocked) in [
            (vec![], true),
            (vec!["m"], false),
            (vec!["c"], true),
            (vec!["m", "c"], true),
        ] {
            assert_eq!(is_blocked(&g, &t, &set(&g, &cond)), blocked, "{cond:?}");
        }
    }

    #[test]
    fn separation_basics() {
        let g = graph(&["u", "v"], &[]);
        let (u, v) = (g.node("u").unwrap(), g.node("v").unwrap());
        assert!(delta_separated(&g, &BTreeSet::from([v]), u, &BTreeSet::new()).unwrap());
        let g = graph(&["u", "v"], &[("u", "v")]);
        let (u, v) = (g.node("u").unwrap(), g.node("v").unwrap());
        let all: BTreeSet<usize> = (0..g.len()).filter(|&i| i != u && i != v).collect();
        assert!(!delta_separated(&g, &BTreeSet::from([u]), v, &all).unwrap());
        assert!(delta_separated(&g, &BTreeSet::from([u]), u, &all).is_err());
    }

    #[test]
    fn figure_one_is_eliminable() {
        let g = Graph::from_spec(&figure_one()).unwrap();
        let report = check_eliminability(&g);
        assert!(report.eliminable, "{report}");
        assert!(!report.checks[0].first.satisfied);
        assert!(report.checks[0].second.satisfied);
        assert!(report.checks[1].first.satisfied);
        // N^a is δ-separated from U_1 by {N^x, N^y}.
        let (na, u1) = (g.node("Na").unwrap(), g.node("U1").unwrap());
        assert!(delta_separated(&g, &BTreeSet::from([u1]), na, &set(&g, &["Nx", "Ny"])).unwrap());
    }

    #[test]
    fn bundled_graph_files_match_builders() {
        let fig: GraphSpec = toml::from_str(include_str!("../fixtures/graphs/figure1.toml")).unwrap();
        assert_eq!(Graph::from_spec(&fig).unwrap(), Graph::from_spec(&figure_one()).unwrap());
        let conf: GraphSpec = toml::from_str(include_str!("../fixtures/graphs/confounded.toml")).unwrap();
        assert_eq!(Graph::from_spec(&conf).unwrap(), Graph::from_spec(&confounded_example()).unwrap());
    }

    #[test]
    fn figure_one_trail_counts() {
        // Counted by hand: U1 reaches Na through Nx or Ny, directly or via
        // the other observed node in either edge direction.
        let g = Graph::from_spec(&figure_one()).unwrap();
        let count = |a: &str, b: &str| enumerate_allowed_trails(&g, g.node(a).unwrap(), g.node(b).unwrap()).len();
        assert_eq!(count("U1", "Na"), 6);
        assert_eq!(count("U2", "Na"), 1);
        assert_eq!(count("Na", "U1"), 0);
    }

    #[test]
    fn single_confounder_fails_with_direct_edges() {
        let g = Graph::from_spec(&confounded_example()).unwrap();
        let report = check_eliminability(&g);
        assert!(!report.eliminable);
        let c = &report.checks[0];
        assert_eq!(c.first.witness.as_deref(), Some("U → Ny"));
        assert_eq!(c.second.witness.as_deref(), Some("U → Na"));
    }

    #[test]
    fn no_unobserved_is_vacuous() {
        let g = graph(&[], &[("Nx", "Na")]);
        assert!(check_eliminability(&g).eliminable);
    }

    #[test]
    fn spec_validation() {
        let mut s = figure_one();
        s.unobserved_order.pop();
        assert!(Graph::from_spec(&s).is_err());
        let mut s = figure_one();
        s.edges.push(("Nx".into(), "Nx".into()));
        assert!(Graph::from_spec(&s).is_err());
        let mut s = figure_one();
        s.edges.push(("Nx".into(), "Q".into()));
        assert!(matches!(Graph::from_spec(&s), Err(Error::UnknownNode(_))));
        let round = Graph::from_spec(&Graph::from_spec(&figure_one()).unwrap().to_spec()).unwrap();
        assert_eq!(round, Graph::from_spec(&figure_one()).unwrap());
    }

    // -- independent brute force -------------------------------------------

    /// Reachability by Warshall's closure.
    fn closure(g: &Graph) -> Vec<Vec<bool>> {
        let n = g.len();
        let mut r: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| g.has_edge(i, j)).collect()).collect();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    r[i][j] = r[i][j] || (r[i][k] && r[k][j]);
                }
            }
        }
        r
    }

    fn permutations(items: &[usize], len: usize) -> Vec<Vec<usize>> {
        if len == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for (i, &x) in items.iter().enumerate() {
            let rest: Vec<usize> = items.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &v)| v).collect();
            for mut p in permutations(&rest, len - 1) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    /// Some allowed trail from `a` to `u` is open given `{u} ∪ c`: tries every
    /// ordered interior vertex sequence and every orientation pattern.
    fn brute_open(g: &Graph, reach: &[Vec<bool>], a: usize, u: usize, c: &BTreeSet<usize>) -> bool {
        let mut blocking = c.clone();
        blocking.insert(u);
        let others: Vec<usize> = (0..g.len()).filter(|&v| v != a && v != u).collect();
        for len in 0..=others.len() {
            for mid in permutations(&others, len) {
                let mut seq = vec![a];
                seq.extend(&mid);
                seq.push(u);
                let m = seq.len() - 1;
                for mask in 0..(1u32 << m) {
                    let fw: Vec<bool> = (0..m).map(|j| mask >> j & 1 == 1).collect();
                    if !fw[m - 1] {
                        continue;
                    }
                    let exists = (0..m).all(|j| {
                        if fw[j] {
                            g.has_edge(seq[j], seq[j + 1])
                        } else {
                            g.has_edge(seq[j + 1], seq[j])
                        }
                    });
                    if !exists {
                        continue;
                    }
                    let open = (1..m).all(|j| {
                        let v = seq[j];
                        if fw[j - 1] && !fw[j] {
                            blocking.contains(&v) || blocking.iter().any(|&w| reach[v][w])
                        } else {
                            !blocking.contains(&v)
                        }
                    });
                    if open {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn brute_eliminable(g: &Graph) -> bool {
        let reach = closure(g);
        g.order.iter().enumerate().all(|(k, &u)| {
            let later = &g.order[k + 1..];
            let mut given: BTreeSet<usize> = [g.x, g.y, g.a].into_iter().collect();
            given.extend(later);
            let holds = |t: usize| {
                let mut c = given.clone();
                c.remove(&t);
                !brute_open(g, &reach, u, t, &c)
            };
            let mut first = vec![g.x, g.y];
            first.extend(later);
            first.into_iter().all(holds) || holds(g.a)
        })
    }

    fn random_graph(rng: &mut dyn RngCore) -> Graph {
        let n_u = rng.random_range(0..=2usize);
        let mut nodes: Vec<String> = ["Nx", "Ny", "Na"].map(String::from).to_vec();
        nodes.extend((1..=n_u).map(|i| format!("U{i}")));
        let n = nodes.len();
        let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).collect();
        pairs.shuffle(rng);
        let m = rng.random_range(0..=8usize.min(pairs.len()));
        let edges = pairs[..m].iter().map(|&(i, j)| (nodes[i].clone(), nodes[j].clone())).collect();
        let order = nodes[3..].to_vec();
        Graph::from_spec(&GraphSpec {
            nodes,
            edges,
            unobserved_order: order,
            x: default_x(),
            y: default_y(),
            a: default_a(),
        })
        .unwrap()
    }

    #[test]
    fn agrees_with_brute_force_on_random_graphs() {
        let root = crate::rng::SeedStream::new(77);
        let mut positives = 0;
        for i in 0..1000 {
            let g = random_graph(&mut root.index(i).rng());
            let fast = check_eliminability(&g).eliminable;
            assert_eq!(fast, brute_eliminable(&g), "{:?}", g.to_spec());
            positives += fast as usize;
            // Pairwise separation queries as well.
            let reach = closure(&g);
            for a in 0..g.len() {
                for u in 0..g.len() {
                    if a != u {
                        let c: BTreeSet<usize> = (0..g.len()).filter(|v| (v + i as usize) % 2 == 0).collect();
                        let open = !delta_separated(&g, &BTreeSet::from([a]), u, &c).unwrap();
                        assert_eq!(open, brute_open(&g, &reach, a, u, &c));
                    }
                }
            }
        }
        assert!(positives > 100 && positives < 1000, "{positives}");
    }

    proptest! {
        #[test]
        fn renaming_does_not_change_verdict(seed in 0u64..10_000, perm_seed in 0u64..1000) {
            let g = random_graph(&mut crate::rng::SeedStream::new(seed).rng());
            let spec = g.to_spec();
            let mut names: Vec<String> = (0..spec.nodes.len()).map(|i| format!("v{i}")).collect();
            names.shuffle(&mut crate::rng::SeedStream::new(perm_seed).rng());
            let rename = |n: &String| names[spec.nodes.iter().position(|m| m == n).unwrap()].clone();
            let mut nodes: Vec<String> = spec.nodes.iter().map(rename).collect();
            nodes.reverse();
            let renamed = GraphSpec {
                nodes,
                edges: spec.edges.iter().map(|(a, b)| (rename(a), rename(b))).collect(),
                unobserved_order: spec.unobserved_order.iter().map(rename).collect(),
                x: rename(&spec.x),
                y: rename(&spec.y),
                a: rename(&spec.a),
            };
            let h = Graph::from_spec(&renamed).unwrap();
            prop_assert_eq!(check_eliminability(&g).eliminable, check_eliminability(&h).eliminable);
        }

        #[test]
        fn separation_is_antimonotone_in_the_set(seed in 0u64..10_000) {
            let g = random_graph(&mut crate::rng::SeedStream::new(seed).rng());
            let u = g.a;
            let c: BTreeSet<usize> = [g.x].into_iter().collect();
            let full: BTreeSet<usize> = (0..g.len()).filter(|&v| v != u).collect();
            if delta_separated(&g, &full, u, &c).unwrap() {
                for v in &full {
                    prop_assert!(delta_separated(&g, &BTreeSet::from([*v]), u, &c).unwrap());
                }
            }
        }
    }
}
