//! Directed acyclic graphs over named, role-tagged variables.
//!
//! A [`Dag`] carries the variable roles used throughout the crate: sensitive
//! variables (roots), admissible variables, candidate features, and a single
//! target. On top of it sit two d-separation engines — a linear-time
//! reachability traversal used everywhere, and a brute-force simple-path
//! enumerator kept as an independent reference and as the witness finder for
//! reporting an open path — plus the graph-level oracles that characterize
//! which candidates can be kept without routing sensitive information to the
//! target.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Role of a variable in the selection problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Protected attribute; must be a root of the graph.
    Sensitive,
    /// Attribute through which sensitive influence on the target is permitted.
    Admissible,
    /// Feature under consideration for selection.
    Candidate,
    /// Outcome variable; must be a sink, and unique.
    Target,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Sensitive => "sensitive",
            Role::Admissible => "admissible",
            Role::Candidate => "candidate",
            Role::Target => "target",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("duplicate node name: {0}")]
    DuplicateNode(String),
    #[error("unknown node name: {0}")]
    UnknownNode(String),
    #[error("graph contains a directed cycle")]
    Cycle,
    #[error("sensitive node {0} has an incoming edge")]
    SensitiveHasParent(String),
    #[error("no node is marked target")]
    NoTarget,
    #[error("more than one node is marked target: {0} and {1}")]
    MultipleTargets(String, String),
    #[error("target node {0} has an outgoing edge")]
    TargetHasChild(String),
    #[error("self edge on node {0}")]
    SelfEdge(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("sets overlap on node {0}")]
    OverlappingSets(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("conditioning set overlaps a path endpoint: {0}")]
    EndpointConditioned(String),
    #[error("subset search over {0} admissible variables exceeds the limit of {1}")]
    SubsetSearchTooLarge(usize, usize),
}

/// Declarative form of a DAG, as stored on disk.
///
/// Extra per-node fields (such as mechanisms in a sampling spec) are ignored
/// here, so the same file can be read either as a bare graph or as a full
/// model spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DagFile {
    pub nodes: Vec<NodeDecl>,
    pub edges: Vec<EdgeDecl>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDecl {
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeDecl {
    pub from: String,
    pub to: String,
}

/// Immutable DAG over named variables with per-node roles.
///
/// All queries are pure; a constructed `Dag` can be shared freely across
/// threads.
#[derive(Debug, Clone)]
pub struct Dag {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    roles: Vec<Role>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
    target: usize,
}

impl Dag {
    /// Builds a DAG from `(name, role)` declarations and `(parent, child)` edges.
    ///
    /// Rejects cycles, duplicate nodes or edges, sensitive nodes with parents,
    /// targets with children, and any role assignment that does not have
    /// exactly one target.
    pub fn new<N, E>(nodes: N, edges: E) -> Result<Self, GraphError>
    where
        N: IntoIterator<Item = (String, Role)>,
        E: IntoIterator<Item = (String, String)>,
    {
        let mut names = Vec::new();
        let mut roles = Vec::new();
        let mut index = BTreeMap::new();
        for (name, role) in nodes {
            if index.insert(name.clone(), names.len()).is_some() {
                return Err(GraphError::DuplicateNode(name));
            }
            names.push(name);
            roles.push(role);
        }

        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (from, to) in edges {
            let f = *index
                .get(&from)
                .ok_or_else(|| GraphError::UnknownNode(from.clone()))?;
            let t = *index
                .get(&to)
                .ok_or_else(|| GraphError::UnknownNode(to.clone()))?;
            if f == t {
                return Err(GraphError::SelfEdge(from));
            }
            if !seen.insert((f, t)) {
                return Err(GraphError::DuplicateEdge(from, to));
            }
            children[f].push(t);
            parents[t].push(f);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }

        let topo = topo_order(n, &parents, &children).ok_or(GraphError::Cycle)?;

        let mut target = None;
        for i in 0..n {
            match roles[i] {
                Role::Sensitive => {
                    if !parents[i].is_empty() {
                        return Err(GraphError::SensitiveHasParent(names[i].clone()));
                    }
                }
                Role::Target => match target {
                    None => target = Some(i),
                    Some(t) => {
                        return Err(GraphError::MultipleTargets(
                            names[t].clone(),
                            names[i].clone(),
                        ))
                    }
                },
                _ => {}
            }
        }
        let target = target.ok_or(GraphError::NoTarget)?;
        if !children[target].is_empty() {
            return Err(GraphError::TargetHasChild(names[target].clone()));
        }

        Ok(Dag {
            names,
            index,
            roles,
            parents,
            children,
            topo,
            target,
        })
    }

    pub fn from_file(file: &DagFile) -> Result<Self, GraphError> {
        Dag::new(
            file.nodes.iter().map(|d| (d.name.clone(), d.role)),
            file.edges.iter().map(|e| (e.from.clone(), e.to.clone())),
        )
    }

    pub fn to_file(&self) -> DagFile {
        DagFile {
            nodes: self
                .names
                .iter()
                .zip(&self.roles)
                .map(|(name, role)| NodeDecl {
                    name: name.clone(),
                    role: *role,
                })
                .collect(),
            edges: self.edges().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn role(&self, name: &str) -> Result<Role, GraphError> {
        Ok(self.roles[self.idx(name)?])
    }

    /// Names in declaration order, filtered by role.
    pub fn with_role(&self, role: Role) -> Vec<String> {
        self.names
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == role)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn sensitive(&self) -> Vec<String> {
        self.with_role(Role::Sensitive)
    }

    pub fn admissible(&self) -> Vec<String> {
        self.with_role(Role::Admissible)
    }

    pub fn candidates(&self) -> Vec<String> {
        self.with_role(Role::Candidate)
    }

    pub fn target(&self) -> &str {
        &self.names[self.target]
    }

    pub fn parents_of(&self, name: &str) -> Result<Vec<String>, GraphError> {
        let i = self.idx(name)?;
        Ok(self.parents[i].iter().map(|&p| self.names[p].clone()).collect())
    }

    pub fn children_of(&self, name: &str) -> Result<Vec<String>, GraphError> {
        let i = self.idx(name)?;
        Ok(self.children[i].iter().map(|&c| self.names[c].clone()).collect())
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeDecl> + '_ {
        self.names.iter().enumerate().flat_map(move |(i, from)| {
            self.children[i].iter().map(move |&c| EdgeDecl {
                from: from.clone(),
                to: self.names[c].clone(),
            })
        })
    }

    /// Nodes in a topological order (parents before children).
    pub fn topological_order(&self) -> Vec<String> {
        self.topo.iter().map(|&i| self.names[i].clone()).collect()
    }

    fn idx(&self, name: &str) -> Result<usize, GraphError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    fn idx_set<S: AsRef<str>>(&self, names: &[S]) -> Result<BTreeSet<usize>, GraphError> {
        names.iter().map(|n| self.idx(n.as_ref())).collect()
    }

    /// Strict descendants of `name` (transitive closure along edge direction).
    pub fn descendants(&self, name: &str) -> Result<BTreeSet<String>, GraphError> {
        let start = self.idx(name)?;
        let mut out = BTreeSet::new();
        let mut stack = self.children[start].clone();
        let mut seen = vec![false; self.len()];
        while let Some(v) = stack.pop() {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            out.insert(self.names[v].clone());
            stack.extend_from_slice(&self.children[v]);
        }
        Ok(out)
    }

    fn descendant_mask(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = self.children[start].clone();
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                stack.extend_from_slice(&self.children[v]);
            }
        }
        seen
    }

    /// Copy of the graph with every edge into a node of `targets` deleted.
    /// Roles are unchanged.
    pub fn remove_incoming<S: AsRef<str>>(&self, targets: &[S]) -> Result<Dag, GraphError> {
        let cut = self.idx_set(targets)?;
        Dag::new(
            self.names
                .iter()
                .cloned()
                .zip(self.roles.iter().copied()),
            self.names.iter().enumerate().flat_map(|(i, from)| {
                self.children[i]
                    .iter()
                    .filter(|c| !cut.contains(c))
                    .map(move |&c| (from.clone(), self.names[c].clone()))
            }),
        )
    }

    fn check_disjoint(
        &self,
        x: &BTreeSet<usize>,
        y: &BTreeSet<usize>,
        z: &BTreeSet<usize>,
    ) -> Result<(), GraphError> {
        for v in x {
            if y.contains(v) || z.contains(v) {
                return Err(GraphError::OverlappingSets(self.names[*v].clone()));
            }
        }
        for v in y {
            if z.contains(v) {
                return Err(GraphError::OverlappingSets(self.names[*v].clone()));
            }
        }
        Ok(())
    }

    /// Whether `x` and `y` are d-separated given `z`.
    ///
    /// Uses a linear-time reachability traversal over `(node, approach
    /// direction)` states. [`Dag::d_separated_enumerate`] computes the same
    /// relation by exhaustive path enumeration and the two are held equal by
    /// property tests.
    pub fn d_separated<S: AsRef<str>>(
        &self,
        x: &[S],
        y: &[S],
        z: &[S],
    ) -> Result<bool, GraphError> {
        let x = self.idx_set(x)?;
        let y = self.idx_set(y)?;
        let z = self.idx_set(z)?;
        self.check_disjoint(&x, &y, &z)?;
        Ok(self.reachable_hits_none(&x, &y, &z))
    }

    fn reachable_hits_none(
        &self,
        x: &BTreeSet<usize>,
        y: &BTreeSet<usize>,
        z: &BTreeSet<usize>,
    ) -> bool {
        let n = self.len();
        let in_z = {
            let mut m = vec![false; n];
            for &v in z {
                m[v] = true;
            }
            m
        };
        // z together with its ancestors: the nodes at which a collider is open.
        let mut anc_z = in_z.clone();
        {
            let mut stack: Vec<usize> = z.iter().copied().collect();
            while let Some(v) = stack.pop() {
                for &p in &self.parents[v] {
                    if !anc_z[p] {
                        anc_z[p] = true;
                        stack.push(p);
                    }
                }
            }
        }

        // visited[v] bit 0: reached moving upward (from a child);
        // bit 1: reached moving downward (from a parent).
        let mut visited = vec![0u8; n];
        let mut queue = VecDeque::new();
        for &s in x {
            queue.push_back((s, true));
        }
        while let Some((v, up)) = queue.pop_front() {
            let bit = if up { 1u8 } else { 2u8 };
            if visited[v] & bit != 0 {
                continue;
            }
            visited[v] |= bit;
            if !in_z[v] && y.contains(&v) {
                return false;
            }
            if up {
                // Arrived from a child; continue through v unless it is conditioned.
                if !in_z[v] {
                    for &p in &self.parents[v] {
                        queue.push_back((p, true));
                    }
                    for &c in &self.children[v] {
                        queue.push_back((c, false));
                    }
                }
            } else {
                // Arrived from a parent: v is a collider on this trail when we
                // turn back toward its parents, which is open only if v or a
                // descendant of v is conditioned.
                if !in_z[v] {
                    for &c in &self.children[v] {
                        queue.push_back((c, false));
                    }
                }
                if anc_z[v] {
                    for &p in &self.parents[v] {
                        queue.push_back((p, true));
                    }
                }
            }
        }
        true
    }

    /// Brute-force d-separation by enumerating every simple path between the
    /// two sets and checking each one for blocking. Exponential in the worst
    /// case; intended as a reference implementation and for witness extraction.
    pub fn d_separated_enumerate<S: AsRef<str>>(
        &self,
        x: &[S],
        y: &[S],
        z: &[S],
    ) -> Result<bool, GraphError> {
        Ok(self.unblocked_path(x, y, z)?.is_none())
    }

    /// Finds one unblocked path between `x` and `y` given `z`, if any exists.
    pub fn unblocked_path<S: AsRef<str>>(
        &self,
        x: &[S],
        y: &[S],
        z: &[S],
    ) -> Result<Option<Path>, GraphError> {
        let xs = self.idx_set(x)?;
        let ys = self.idx_set(y)?;
        let zs = self.idx_set(z)?;
        self.check_disjoint(&xs, &ys, &zs)?;

        let in_z = {
            let mut m = vec![false; self.len()];
            for &v in &zs {
                m[v] = true;
            }
            m
        };
        let mut desc_cache: BTreeMap<usize, bool> = BTreeMap::new();
        for &start in &xs {
            let mut on_path = vec![false; self.len()];
            let mut nodes = vec![start];
            on_path[start] = true;
            if let Some(found) =
                self.dfs_paths(start, &ys, &in_z, &mut nodes, &mut on_path, &mut desc_cache)
            {
                return Ok(Some(found));
            }
        }
        Ok(None)
    }

    fn dfs_paths(
        &self,
        at: usize,
        ys: &BTreeSet<usize>,
        in_z: &[bool],
        nodes: &mut Vec<usize>,
        on_path: &mut Vec<bool>,
        desc_cache: &mut BTreeMap<usize, bool>,
    ) -> Option<Path> {
        let mut neighbors: Vec<usize> = self.parents[at]
            .iter()
            .chain(self.children[at].iter())
            .copied()
            .collect();
        neighbors.sort_unstable();
        neighbors.dedup();
        for next in neighbors {
            if on_path[next] {
                continue;
            }
            nodes.push(next);
            if ys.contains(&next) {
                let path = self.path_from_indices(nodes);
                if !self.path_blocked(&path.steps(self), in_z, desc_cache) {
                    return Some(path);
                }
            } else {
                on_path[next] = true;
                if let Some(found) = self.dfs_paths(next, ys, in_z, nodes, on_path, desc_cache) {
                    return Some(found);
                }
                on_path[next] = false;
            }
            nodes.pop();
        }
        None
    }

    fn path_from_indices(&self, idx: &[usize]) -> Path {
        Path {
            nodes: idx.iter().map(|&i| self.names[i].clone()).collect(),
        }
    }

    // steps[i] is true when the edge points nodes[i] -> nodes[i+1].
    fn path_blocked(
        &self,
        steps: &[(usize, bool)],
        in_z: &[bool],
        desc_cache: &mut BTreeMap<usize, bool>,
    ) -> bool {
        for w in 1..steps.len() {
            let (mid, into_mid) = (steps[w].0, steps[w - 1].1);
            let out_of_mid = steps[w].1;
            let collider = into_mid && !out_of_mid;
            if collider {
                let open = in_z[mid]
                    || *desc_cache.entry(mid).or_insert_with(|| {
                        self.descendant_mask(mid)
                            .iter()
                            .zip(in_z)
                            .any(|(d, z)| *d && *z)
                    });
                if !open {
                    return true;
                }
            } else if in_z[mid] {
                return true;
            }
        }
        false
    }

    /// Whether `path` is blocked by the conditioning set `z`.
    ///
    /// A path is blocked when it contains a chain or fork whose middle node is
    /// conditioned, or a collider such that neither the collider nor any of its
    /// descendants is conditioned.
    pub fn is_blocked<S: AsRef<str>>(&self, path: &Path, z: &[S]) -> Result<bool, GraphError> {
        path.validate(self)?;
        let zs = self.idx_set(z)?;
        let first = &path.nodes[0];
        let last = path.nodes.last().expect("validated non-empty");
        for v in &zs {
            if self.names[*v] == *first || self.names[*v] == *last {
                return Err(GraphError::EndpointConditioned(self.names[*v].clone()));
            }
        }
        let in_z = {
            let mut m = vec![false; self.len()];
            for &v in &zs {
                m[v] = true;
            }
            m
        };
        let mut cache = BTreeMap::new();
        Ok(self.path_blocked(&path.steps(self), &in_z, &mut cache))
    }

    /// Candidates that are d-separated from the sensitive set given the
    /// admissible set.
    ///
    /// With `subset_mode` the conditioning set ranges over every subset of the
    /// admissible variables and a candidate qualifies if any subset separates
    /// it. The subset search is exponential in the number of admissible
    /// variables and is refused beyond [`SUBSET_SEARCH_LIMIT`].
    pub fn oracle_c1(&self, subset_mode: bool) -> Result<BTreeSet<String>, GraphError> {
        let sens = self.sensitive();
        let adm = self.admissible();
        let mut out = BTreeSet::new();
        for cand in self.candidates() {
            let xs = [cand.clone()];
            if subset_mode {
                if self.separated_by_some_subset(&xs, &sens, &adm)? {
                    out.insert(cand);
                }
            } else if self.d_separated(&xs, &sens, &adm)? {
                out.insert(cand);
            }
        }
        Ok(out)
    }

    fn separated_by_some_subset(
        &self,
        x: &[String],
        y: &[String],
        pool: &[String],
    ) -> Result<bool, GraphError> {
        if pool.len() > SUBSET_SEARCH_LIMIT {
            return Err(GraphError::SubsetSearchTooLarge(
                pool.len(),
                SUBSET_SEARCH_LIMIT,
            ));
        }
        for mask in 0u32..(1u32 << pool.len()) {
            let subset: Vec<String> = pool
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, s)| s.clone())
                .collect();
            if self.d_separated(x, y, &subset)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Candidates outside `c1` that are d-separated from the target given the
    /// admissible set together with `c1`.
    pub fn oracle_c2(&self, c1: &BTreeSet<String>) -> Result<BTreeSet<String>, GraphError> {
        for name in c1 {
            let i = self.idx(name)?;
            if self.roles[i] != Role::Candidate {
                return Err(GraphError::OverlappingSets(name.clone()));
            }
        }
        let mut cond: Vec<String> = self.admissible();
        cond.extend(c1.iter().cloned());
        let y = [self.target().to_string()];
        let mut out = BTreeSet::new();
        for cand in self.candidates() {
            if c1.contains(&cand) {
                continue;
            }
            if self.d_separated(&[cand.clone()], &y, &cond)? {
                out.insert(cand);
            }
        }
        Ok(out)
    }

    /// Ground-truth set of candidates that can be kept without violating
    /// causal fairness: the union of [`Dag::oracle_c1`] (full conditioning),
    /// [`Dag::oracle_c2`], and candidates that are not descendants of any
    /// sensitive node once all incoming edges of the admissible set are
    /// removed. The last condition is not detectable from observational data
    /// alone, which is exactly why this oracle exists.
    pub fn oracle_fair_set(&self) -> Result<BTreeSet<String>, GraphError> {
        let c1 = self.oracle_c1(false)?;
        let c2 = self.oracle_c2(&c1)?;
        let mut out: BTreeSet<String> = c1.union(&c2).cloned().collect();

        let mutilated = self.remove_incoming(&self.admissible())?;
        let mut sens_desc = BTreeSet::new();
        for s in self.sensitive() {
            sens_desc.extend(mutilated.descendants(&s)?);
        }
        for cand in self.candidates() {
            if !sens_desc.contains(&cand) {
                out.insert(cand);
            }
        }
        Ok(out)
    }
}

/// Upper bound on the admissible-set size for the exhaustive subset search.
pub const SUBSET_SEARCH_LIMIT: usize = 16;

fn topo_order(n: usize, parents: &[Vec<usize>], children: &[Vec<usize>]) -> Option<Vec<usize>> {
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// An undirected-skeleton path through a [`Dag`], stored as the node sequence.
///
/// Edge directions are recovered from the graph; a DAG has at most one edge
/// between any adjacent pair, so the sequence determines them uniquely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    nodes: Vec<String>,
}

impl Path {
    pub fn new<S: AsRef<str>>(dag: &Dag, nodes: &[S]) -> Result<Self, GraphError> {
        let path = Path {
            nodes: nodes.iter().map(|s| s.as_ref().to_string()).collect(),
        };
        path.validate(dag)?;
        Ok(path)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    fn validate(&self, dag: &Dag) -> Result<(), GraphError> {
        if self.nodes.len() < 2 {
            return Err(GraphError::InvalidPath(
                "a path needs at least two nodes".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for name in &self.nodes {
            if !seen.insert(name.clone()) {
                return Err(GraphError::InvalidPath(format!("repeated node {name}")));
            }
        }
        for pair in self.nodes.windows(2) {
            let a = dag.idx(&pair[0])?;
            let b = dag.idx(&pair[1])?;
            let adjacent = dag.children[a].contains(&b) || dag.children[b].contains(&a);
            if !adjacent {
                return Err(GraphError::InvalidPath(format!(
                    "{} and {} are not adjacent",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(())
    }

    // (node index, direction of the edge leaving it along the path).
    fn steps(&self, dag: &Dag) -> Vec<(usize, bool)> {
        let idx: Vec<usize> = self
            .nodes
            .iter()
            .map(|n| dag.idx(n).expect("validated"))
            .collect();
        let mut steps = Vec::with_capacity(idx.len());
        for w in 0..idx.len() {
            let forward = if w + 1 < idx.len() {
                dag.children[idx[w]].contains(&idx[w + 1])
            } else {
                true
            };
            steps.push((idx[w], forward));
        }
        steps
    }

    /// Renders the path with arrows, e.g. `S -> X2 <- A`.
    pub fn render(&self, dag: &Dag) -> String {
        let steps = self.steps(dag);
        let mut out = String::new();
        for (w, name) in self.nodes.iter().enumerate() {
            if w > 0 {
                out.push_str(if steps[w - 1].1 { " -> " } else { " <- " });
            }
            out.push_str(name);
        }
        out
    }
}

/// Samples a role-labelled random DAG: sensitive nodes are roots, the target
/// is a sink, remaining nodes are split between admissible and candidate.
///
/// Meant for property tests and benchmarks; the construction guarantees every
/// [`Dag`] invariant by placing sensitive nodes first and the target last in
/// the generating order.
pub fn random_dag(max_nodes: usize, max_edges: usize, seed: u64) -> Dag {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let n = rng.random_range(4..=max_nodes.max(4));
    let n_sens = rng.random_range(1..=((n / 4).max(1)));
    let mut names: Vec<String> = Vec::with_capacity(n);
    let mut roles: Vec<Role> = Vec::with_capacity(n);
    for i in 0..n_sens {
        names.push(format!("S{}", i + 1));
        roles.push(Role::Sensitive);
    }
    let mut n_adm = 0;
    let mut n_cand = 0;
    for _ in n_sens..n - 1 {
        if rng.random_bool(0.3) {
            n_adm += 1;
            names.push(format!("A{n_adm}"));
            roles.push(Role::Admissible);
        } else {
            n_cand += 1;
            names.push(format!("X{n_cand}"));
            roles.push(Role::Candidate);
        }
    }
    names.push("Y".to_string());
    roles.push(Role::Target);

    // Mid-section order is shuffled so admissible/candidate nodes interleave.
    let mut order: Vec<usize> = (0..n).collect();
    order[n_sens..n - 1].shuffle(&mut rng);

    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let child = order[j];
            if roles[child] == Role::Sensitive {
                continue;
            }
            pairs.push((order[i], order[j]));
        }
    }
    pairs.shuffle(&mut rng);
    let density = rng.random_range(0.15..0.5);
    let mut edges = Vec::new();
    for (f, t) in pairs {
        if edges.len() >= max_edges {
            break;
        }
        if rng.random_bool(density) {
            edges.push((names[f].clone(), names[t].clone()));
        }
    }

    Dag::new(
        names.iter().cloned().zip(roles.iter().copied()),
        edges,
    )
    .expect("construction respects all invariants")
}
