use crate::error::{Error, Result};

/// Enumerates the elementary circuits of a digraph given by successor lists
/// (Johnson's algorithm). Each circuit starts at its smallest node and
/// follows the arcs. Fails once more than `cap` circuits are found.
pub fn elementary_cycles(succ: &[Vec<usize>], cap: usize) -> Result<Vec<Vec<usize>>> {
    let n = succ.len();
    let mut out = Vec::new();
    for start in 0..n {
        // nodes >= start that lie in the same strong component as `start`
        let allowed = component_of(succ, start);
        if !allowed.iter().any(|&a| a) {
            continue;
        }
        let mut search = Search {
            succ,
            allowed: &allowed,
            start,
            blocked: vec![false; n],
            blocked_by: vec![Vec::new(); n],
            stack: Vec::new(),
            out: &mut out,
            cap,
        };
        search.circuit(start)?;
    }
    Ok(out)
}

/// Strong component of `start` inside the subgraph induced by nodes `>= start`.
fn component_of(succ: &[Vec<usize>], start: usize) -> Vec<bool> {
    let n = succ.len();
    let walk = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for u in start..n {
                let arc = if forward { succ[v].contains(&u) } else { succ[u].contains(&v) };
                if arc && !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    };
    let fwd = walk(true);
    let bwd = walk(false);
    let mut comp: Vec<bool> = fwd.iter().zip(&bwd).map(|(&a, &b)| a && b).collect();
    // a lone node only counts when it carries a self-arc
    if comp.iter().filter(|&&c| c).count() == 1 && !succ[start].contains(&start) {
        comp[start] = false;
    }
    comp
}

struct Search<'a> {
    succ: &'a [Vec<usize>],
    allowed: &'a [bool],
    start: usize,
    blocked: Vec<bool>,
    blocked_by: Vec<Vec<usize>>,
    stack: Vec<usize>,
    out: &'a mut Vec<Vec<usize>>,
    cap: usize,
}

impl Search<'_> {
    fn circuit(&mut self, v: usize) -> Result<bool> {
        let mut found = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for &w in &self.succ[v] {
            if !self.allowed[w] {
                continue;
            }
            if w == self.start {
                if self.out.len() >= self.cap {
                    return Err(Error::CycleEnumerationOverflow { cap: self.cap });
                }
                self.out.push(self.stack.clone());
                found = true;
            } else if !self.blocked[w] && self.circuit(w)? {
                found = true;
            }
        }
        if found {
            self.unblock(v);
        } else {
            for &w in &self.succ[v] {
                if self.allowed[w] && !self.blocked_by[w].contains(&v) {
                    self.blocked_by[w].push(v);
                }
            }
        }
        self.stack.pop();
        Ok(found)
    }

    fn unblock(&mut self, u: usize) {
        self.blocked[u] = false;
        let waiting = std::mem::take(&mut self.blocked_by[u]);
        for w in waiting {
            if self.blocked[w] {
                self.unblock(w);
            }
        }
    }
}
