//! Optimal full matching on the propensity score.
//!
//! A full matching whose strata each hold one treated unit with several
//! controls or one control with several treated units is a star forest in
//! the complete treated–control bipartite graph, so the optimal full matching
//! is a minimum-cost edge cover. The cover is found as a min-cost flow where
//! every unit has a heavily rewarded first unit of degree.

mod flow;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::effect::fit_propensity;
use crate::error::{Error, Result};
use crate::glm::logit;
use flow::MinCostFlow;

/// Distances are multiplied by this and rounded before solving.
pub const COST_SCALE: f64 = 1e6;
/// Propensity scores are clipped to `[PS_CLIP, 1 - PS_CLIP]` for distances.
pub const PS_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    #[default]
    AbsLogitPs,
    AbsPs,
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs_logit_ps" => Ok(DistanceKind::AbsLogitPs),
            "abs_ps" => Ok(DistanceKind::AbsPs),
            other => Err(Error::InvalidInput(format!("unknown distance `{other}` (abs_logit_ps, abs_ps)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub distance: DistanceKind,
    pub max_controls_per_treated: Option<usize>,
    pub max_treated_per_control: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullMatch {
    /// Unit indices per stratum, each sorted; strata ordered by smallest member.
    pub strata: Vec<Vec<usize>>,
    pub stratum_of: Vec<usize>,
    /// Sum of treated–control distances within strata.
    pub total_distance: f64,
    /// Same total on the integer cost scale used by the solver.
    pub total_cost: i64,
    pub distance_kind: DistanceKind,
}

impl FullMatch {
    /// Rebuild from a stratum label per unit; labels are renumbered by smallest member.
    pub fn from_labels(labels: &[usize], distance_kind: DistanceKind) -> FullMatch {
        let mut strata = group_labels(labels);
        strata.sort_by_key(|s| s[0]);
        let mut stratum_of = vec![0; labels.len()];
        for (r, s) in strata.iter().enumerate() {
            for &i in s {
                stratum_of[i] = r;
            }
        }
        FullMatch { strata, stratum_of, total_distance: f64::NAN, total_cost: 0, distance_kind }
    }

    pub fn n(&self) -> usize {
        self.stratum_of.len()
    }

    pub fn num_strata(&self) -> usize {
        self.strata.len()
    }

    pub fn treated_counts(&self, treatment: &[u8]) -> Vec<usize> {
        self.strata.iter().map(|s| s.iter().filter(|&&i| treatment[i] == 1).count()).collect()
    }

    /// Every stratum has both classes and never two or more of each.
    pub fn check_structure(&self, treatment: &[u8]) -> Result<()> {
        if treatment.len() != self.n() {
            return Err(Error::InvalidInput("treatment length differs from matched units".into()));
        }
        let mut seen = vec![false; self.n()];
        for (r, s) in self.strata.iter().enumerate() {
            let t = s.iter().filter(|&&i| treatment[i] == 1).count();
            let c = s.len() - t;
            if t == 0 || c == 0 {
                return Err(Error::InvalidInput(format!("stratum {r} lacks a treated or a control unit")));
            }
            if t >= 2 && c >= 2 {
                return Err(Error::InvalidInput(format!("stratum {r} has {t} treated and {c} controls")));
            }
            for &i in s {
                if seen[i] || self.stratum_of[i] != r {
                    return Err(Error::InvalidInput(format!("unit {i} assigned inconsistently")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("strata do not cover every unit".into()));
        }
        Ok(())
    }
}

fn group_labels(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut by_label: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    by_label.into_values().collect()
}

pub fn scale_cost(d: f64) -> i64 {
    (d * COST_SCALE).round() as i64
}

pub fn clip_ps(p: f64) -> f64 {
    p.clamp(PS_CLIP, 1.0 - PS_CLIP)
}

/// Matching coordinate of each unit; distances are absolute differences of these.
pub fn match_scores(ps: &[f64], kind: DistanceKind) -> Result<Vec<f64>> {
    ps.iter()
        .enumerate()
        .map(|(i, &p)| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("propensity score {p} of unit {i} not in [0, 1]")));
            }
            Ok(match kind {
                DistanceKind::AbsLogitPs => logit(clip_ps(p)),
                DistanceKind::AbsPs => p,
            })
        })
        .collect()
}

/// Optimal full matching on propensity scores.
pub fn full_match(ps: &[f64], treatment: &[u8], config: &MatchConfig) -> Result<FullMatch> {
    let scores = match_scores(ps, config.distance)?;
    let mut m = full_match_scores(&scores, treatment, config)?;
    m.distance_kind = config.distance;
    Ok(m)
}

/// Optimal full matching with distance `|score_i - score_j|`.
pub fn full_match_scores(scores: &[f64], treatment: &[u8], config: &MatchConfig) -> Result<FullMatch> {
    if scores.len() != treatment.len() {
        return Err(Error::InvalidInput(format!("{} scores for {} units", scores.len(), treatment.len())));
    }
    let treated: Vec<usize> = (0..treatment.len()).filter(|&i| treatment[i] == 1).collect();
    let controls: Vec<usize> = (0..treatment.len()).filter(|&i| treatment[i] != 1).collect();
    if treated.is_empty() || controls.is_empty() {
        return Err(Error::InfeasibleMatching("both treated and control units are required".into()));
    }
    let mut cost = vec![vec![0i64; controls.len()]; treated.len()];
    for (a, &t) in treated.iter().enumerate() {
        for (b, &c) in controls.iter().enumerate() {
            let d = (scores[t] - scores[c]).abs();
            if !d.is_finite() || d * COST_SCALE > 1e12 {
                return Err(Error::InvalidInput(format!("distance between units {t} and {c} is not finite")));
            }
            cost[a][b] = scale_cost(d);
        }
    }
    let edges = solve_edge_cover(&cost, config)?;

    let n = treatment.len();
    let mut labels: Vec<usize> = (0..n).collect();
    // union of star edges
    fn find(labels: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while labels[r] != r {
            r = labels[r];
        }
        let mut i = i;
        while labels[i] != r {
            let next = labels[i];
            labels[i] = r;
            i = next;
        }
        r
    }
    let mut total_cost = 0i64;
    let mut total_distance = 0.0;
    for &(a, b) in &edges {
        let (t, c) = (treated[a], controls[b]);
        total_cost += cost[a][b];
        total_distance += (scores[t] - scores[c]).abs();
        let (rt, rc) = (find(&mut labels, t), find(&mut labels, c));
        if rt != rc {
            labels[rt.max(rc)] = rt.min(rc);
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut labels, i)).collect();
    let mut m = FullMatch::from_labels(&roots, DistanceKind::AbsLogitPs);
    m.total_cost = total_cost;
    m.total_distance = total_distance;
    m.check_structure(treatment)?;
    Ok(m)
}

/// Minimum-cost edge cover of the complete bipartite graph as `(treated, control)` position pairs.
fn solve_edge_cover(cost: &[Vec<i64>], config: &MatchConfig) -> Result<Vec<(usize, usize)>> {
    let nt = cost.len();
    let nc = cost[0].len();
    let max_cost = cost.iter().flatten().copied().max().unwrap_or(0);
    let bonus = (nt as i64 + nc as i64) * max_cost + 1;

    let source = 0;
    let sink = 1 + nt + nc;
    let t_node = |a: usize| 1 + a;
    let c_node = |b: usize| 1 + nt + b;
    let mut g = MinCostFlow::new(nt + nc + 2);

    let t_extra = config.max_controls_per_treated.map_or(nc as i64, |k| k as i64 - 1);
    let c_extra = config.max_treated_per_control.map_or(nt as i64, |k| k as i64 - 1);
    if t_extra < 0 || c_extra < 0 {
        return Err(Error::InvalidInput("ratio caps must be at least 1".into()));
    }

    let mut bonus_arcs = Vec::with_capacity(nt + nc);
    for a in 0..nt {
        bonus_arcs.push(g.add_arc(source, t_node(a), 1, -bonus));
        if t_extra > 0 {
            g.add_arc(source, t_node(a), t_extra, 0);
        }
    }
    let mut pair_arcs = vec![Vec::with_capacity(nc); nt];
    for a in 0..nt {
        for b in 0..nc {
            pair_arcs[a].push(g.add_arc(t_node(a), c_node(b), 1, cost[a][b]));
        }
    }
    for b in 0..nc {
        bonus_arcs.push(g.add_arc(c_node(b), sink, 1, -bonus));
        if c_extra > 0 {
            g.add_arc(c_node(b), sink, c_extra, 0);
        }
    }

    g.run_negative_paths(source, sink);
    if bonus_arcs.iter().any(|&a| g.flow_on(a) == 0) {
        return Err(Error::InfeasibleMatching(format!(
            "no full matching of {nt} treated and {nc} controls satisfies the ratio caps"
        )));
    }

    let mut edges: Vec<(usize, usize)> = Vec::new();
    for a in 0..nt {
        for b in 0..nc {
            if g.flow_on(pair_arcs[a][b]) > 0 {
                edges.push((a, b));
            }
        }
    }
    // zero-cost edges can leave both endpoints with degree >= 2
    let mut deg_t = vec![0usize; nt];
    let mut deg_c = vec![0usize; nc];
    for &(a, b) in &edges {
        deg_t[a] += 1;
        deg_c[b] += 1;
    }
    edges.retain(|&(a, b)| {
        if deg_t[a] >= 2 && deg_c[b] >= 2 {
            deg_t[a] -= 1;
            deg_c[b] -= 1;
            false
        } else {
            true
        }
    });
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityScores {
    pub ps: Vec<f64>,
    pub separation: bool,
}

/// Fitted logistic propensity scores for a covariate subset (intercept included).
pub fn ps_for_subset(data: &Dataset, subset: &[usize]) -> Result<PropensityScores> {
    let fit = fit_propensity(data, subset)?;
    if fit.separation {
        log::debug!("propensity model on {} covariates shows separation; scores clipped for matching", subset.len());
    }
    let x = data.treatment_design(subset)?;
    Ok(PropensityScores { ps: fit.predict(x.values()), separation: fit.separation })
}

/// Writes `unit_id,stratum_id` rows (0-based).
pub fn write_strata_csv<W: Write>(m: &FullMatch, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["unit_id", "stratum_id"])?;
    for (i, r) in m.stratum_of.iter().enumerate() {
        w.write_record([i.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_strata_csv<R: Read>(input: R, distance_kind: DistanceKind) -> Result<FullMatch> {
    let mut r = csv::Reader::from_reader(input);
    let mut pairs = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |k: usize| -> Result<usize> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("bad strata row {:?}", rec)))
        };
        pairs.push((parse(0)?, parse(1)?));
    }
    let n = pairs.len();
    let mut labels = vec![usize::MAX; n];
    for (unit, stratum) in pairs {
        if unit >= n || labels[unit] != usize::MAX {
            return Err(Error::InvalidInput(format!("unit id {unit} repeated or out of range")));
        }
        labels[unit] = stratum;
    }
    Ok(FullMatch::from_labels(&labels, distance_kind))
}

pub fn write_strata_file(m: &FullMatch, path: &Path) -> Result<()> {
    write_strata_csv(m, std::fs::File::create(path)?)
}
