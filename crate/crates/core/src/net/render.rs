//! Text renderings of a net: clausal lines, edge pairs, DOT, JSON and branching reports.

use std::fmt::Write;

use super::{Node, PetriNet, PlaceId};

impl PetriNet {
    /// `start - a:sig`, `a:sig - s(k) - b:sig` and `g:sig - end` lines.
    pub fn render_clausal(&self) -> String {
        let mut out = String::new();
        let mut mid: Vec<(char, PlaceId, char)> = Vec::new();
        for p in &self.places {
            match p.id {
                PlaceId::Start => {
                    for &c in &p.consumers {
                        let _ = writeln!(out, "start - {}", self.node_text(c));
                    }
                }
                PlaceId::S(_) => {
                    for &a in &p.producers {
                        mid.extend(p.consumers.iter().map(|&b| (a, p.id, b)));
                    }
                }
                PlaceId::End => {}
            }
        }
        mid.sort();
        for (a, p, b) in mid {
            let _ = writeln!(out, "{} - {p} - {}", self.node_text(a), self.node_text(b));
        }
        if let Some(end) = self.place(PlaceId::End) {
            for &t in &end.producers {
                let _ = writeln!(out, "{} - end", self.node_text(t));
            }
        }
        out
    }

    fn edge_node(&self, n: &Node) -> String {
        match n {
            Node::Place(p) => format!("{p}:nil"),
            Node::Transition(t) => self.node_text(*t),
        }
    }

    /// One `[id:ev, id:ev]` line per arc.
    pub fn render_edges(&self) -> String {
        let mut out = String::new();
        for (a, b) in &self.arcs {
            let _ = writeln!(out, "[{}, {}]", self.edge_node(a), self.edge_node(b));
        }
        out
    }

    pub fn render_dot(&self) -> String {
        let mut out = String::from("digraph petri_net {\n  rankdir=LR;\n");
        for p in &self.places {
            let shape = if matches!(p.id, PlaceId::S(_)) { "circle" } else { "doublecircle" };
            let _ = writeln!(out, "  \"{}\" [shape={shape}, label=\"{}\"];", p.id, p.id);
        }
        for t in &self.transitions {
            let _ = writeln!(out, "  \"{}\" [shape=box, label=\"{}:{}\"];", t.label, t.label, t.name);
        }
        for (a, b) in &self.arcs {
            let _ = writeln!(out, "  \"{a}\" -> \"{b}\";");
        }
        out.push_str("}\n");
        out
    }

    pub fn render_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("net serializes")
    }

    /// Or-fork lines `origin - x - y, z` and or-join lines `p - q - target`.
    pub fn render_forks(&self) -> String {
        let mut out = String::from("Or-forks\n");
        for line in self.or_fork_lines() {
            let _ = writeln!(out, "{line}");
        }
        out.push_str("\nOr-joins\n");
        for line in self.or_join_lines() {
            let _ = writeln!(out, "{line}");
        }
        out
    }

    /// For each or-class, one line per member that is exclusive with later members (by name).
    pub fn or_fork_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for f in &self.or_forks {
            let mut members: Vec<char> = f.branches.clone();
            members.sort_by_key(|&m| self.transition(m).map(|t| t.name.clone()));
            for (i, &x) in members.iter().enumerate() {
                let later: Vec<String> = members[i + 1..]
                    .iter()
                    .filter(|&&y| self.exclusive(x, y))
                    .map(|&y| self.signature(y))
                    .collect();
                if !later.is_empty() {
                    out.push(format!("{} - {} - {}", self.signature(f.origin), self.signature(x), later.join(", ")));
                }
            }
        }
        out
    }

    pub fn or_join_lines(&self) -> Vec<String> {
        self.or_joins
            .iter()
            .map(|j| {
                let mut parts: Vec<String> = j.producers.iter().map(|&p| self.signature(p)).collect();
                parts.push(self.signature(j.target));
                parts.join(" - ")
            })
            .collect()
    }

    fn exclusive(&self, x: char, y: char) -> bool {
        self.exclusive_pairs.contains(&(x.min(y), x.max(y)))
    }
}

#[cfg(test)]
mod tests {
    use crate::dsl::parse_spec;
    use crate::net::synthesize;

    #[test]
    fn request_clausal_listing() {
        let spec = parse_spec(include_str!("../../examples/request.scspec")).unwrap();
        let text = synthesize(&spec).unwrap().render_clausal();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 15);
        assert_eq!(lines[0], "start - a:register(c,v,t,r)");
        assert_eq!(lines[1], "a:register(c,v,t,r) - s(1) - b:examine_thoroughly(r,c)");
        assert_eq!(lines[12], "f:reinitiate_request(r,c,t,v) - s(2) - d:check_ticket(r,c,t)");
        assert_eq!(lines[14], "h:reject_request(r,c,v) - end");
    }

    #[test]
    fn trial_edge_listing_starts_with_accuse() {
        let spec = parse_spec(include_str!("../../examples/trial.scspec")).unwrap();
        let text = synthesize(&spec).unwrap().render_edges();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 19);
        assert_eq!(lines[0], "[start:nil, a:accuse(a,d,o)]");
        assert_eq!(lines[18], "[h:condemn(d,o), end:nil]");
    }

    #[test]
    fn fork_report_lines() {
        let spec = parse_spec(include_str!("../../examples/request.scspec")).unwrap();
        let net = synthesize(&spec).unwrap();
        assert_eq!(
            net.or_fork_lines(),
            [
                "register(c,v,t,r) - examine_casually(r,c) - examine_thoroughly(r,c)",
                "decide(r,c,v,d) - pay_compensation(r,c,v) - reinitiate_request(r,c,t,v), reject_request(r,c,v)",
                "decide(r,c,v,d) - reinitiate_request(r,c,t,v) - reject_request(r,c,v)",
                "reinitiate_request(r,c,t,v) - examine_casually(r,c) - examine_thoroughly(r,c)",
            ]
        );
        assert_eq!(net.or_join_lines()[2], "register(c,v,t,r) - reinitiate_request(r,c,t,v) - check_ticket(r,c,t)");
    }

    #[test]
    fn dot_marks_start_and_end() {
        let spec = parse_spec(include_str!("../../examples/request.scspec")).unwrap();
        let dot = synthesize(&spec).unwrap().render_dot();
        assert!(dot.contains("\"start\" [shape=doublecircle"));
        assert!(dot.contains("\"e\" [shape=box, label=\"e:decide\"]"));
    }
}
