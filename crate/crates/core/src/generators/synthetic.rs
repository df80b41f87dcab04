//! A clustered discrete solution space standing in for a language model.
//!
//! Points are `(cluster, member)` pairs rendered as `SYNTH c m`. Plain
//! regeneration mostly stays inside the current cluster; a direction
//! `jump:cX` moves to cluster X with probability `q_jump`. Both transition
//! kernels are available as explicit matrices so conductance can be computed
//! exactly.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;
use thiserror::Error;

use super::{GenerationKind, GenerationRequest, GenerationResponse, Generator, GeneratorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid landscape: {0}")]
    InvalidLandscape(String),
    #[error("invalid subset: {0}")]
    InvalidSubset(String),
    #[error("parse failure")]
    Parse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Point {
    pub cluster: usize,
    pub member: usize,
}

impl Point {
    pub fn new(cluster: usize, member: usize) -> Self {
        Self { cluster, member }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.cluster, self.member)
    }
}

pub fn synth_encode(p: Point) -> String {
    format!("SYNTH {} {}", p.cluster, p.member)
}

/// Inverse of [`synth_encode`]. Range checks are left to the landscape.
pub fn synth_decode(text: &str) -> Result<Point, SynthError> {
    let mut it = text.split_whitespace();
    match (it.next(), it.next(), it.next(), it.next()) {
        (Some("SYNTH"), Some(c), Some(m), None) => {
            let parse = |s: &str| -> Result<usize, SynthError> {
                if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(SynthError::Parse);
                }
                s.parse().map_err(|_| SynthError::Parse)
            };
            Ok(Point::new(parse(c)?, parse(m)?))
        }
        _ => Err(SynthError::Parse),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Concentrated,
    Scattered,
}

impl Kernel {
    pub fn as_str(self) -> &'static str {
        match self {
            Kernel::Concentrated => "concentrated",
            Kernel::Scattered => "scattered",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concentrated" => Ok(Kernel::Concentrated),
            "scattered" => Ok(Kernel::Scattered),
            other => Err(format!("unknown kernel {other:?}")),
        }
    }
}

/// One of the moves a synthetic direction can name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Move {
    Jump(usize),
    Stay,
}

impl Move {
    pub fn label(self) -> String {
        match self {
            Move::Jump(c) => format!("jump:c{c}"),
            Move::Stay => "stay".to_string(),
        }
    }

    pub fn parse(label: &str) -> Option<Move> {
        let l = label.trim();
        if l == "stay" {
            return Some(Move::Stay);
        }
        let digits = l.strip_prefix("jump:c")?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        digits.parse().ok().map(Move::Jump)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLandscape {
    pub clusters: usize,
    pub points_per_cluster: usize,
    /// Integer grade per point, `grades[cluster][member]`; value = grade / scale.
    pub grades: Vec<Vec<u32>>,
    pub grade_scale: u32,
    pub p_stay: f64,
    pub q_jump: f64,
    /// Cluster that unthemed generation starts from.
    pub home_cluster: usize,
}

impl Default for SyntheticLandscape {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../data/default_landscape.json")).expect("bundled landscape parses")
    }
}

impl SyntheticLandscape {
    /// Checks the parameters needed to build transition kernels.
    pub fn check_kernel_params(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidLandscape(m));
        if self.clusters == 0 || self.points_per_cluster == 0 {
            return bad("landscape needs at least one cluster and one point".into());
        }
        if !(0.0..=1.0).contains(&self.p_stay) {
            return bad(format!("p_stay {} outside [0,1]", self.p_stay));
        }
        if !(0.0..=1.0).contains(&self.q_jump) {
            return bad(format!("q_jump {} outside [0,1]", self.q_jump));
        }
        if self.home_cluster >= self.clusters {
            return bad(format!("home cluster {} out of range", self.home_cluster));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.check_kernel_params()?;
        let bad = |m: String| Err(SynthError::InvalidLandscape(m));
        if !(self.p_stay > 0.0 && self.p_stay < 1.0) {
            return bad(format!("p_stay {} must lie strictly between 0 and 1", self.p_stay));
        }
        if self.q_jump <= 0.0 {
            return bad(format!("q_jump {} must be positive", self.q_jump));
        }
        if self.grade_scale == 0 {
            return bad("grade scale must be positive".into());
        }
        if self.grades.len() != self.clusters || self.grades.iter().any(|r| r.len() != self.points_per_cluster) {
            return bad("grade table shape does not match clusters x points".into());
        }
        if self.grades.iter().flatten().any(|&g| g > self.grade_scale) {
            return bad("grade above scale".into());
        }
        let optima = self.grades.iter().flatten().filter(|&&g| g == self.grade_scale).count();
        if optima != 1 {
            return bad(format!("expected exactly one optimum, found {optima}"));
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.clusters * self.points_per_cluster
    }

    pub fn index(&self, p: Point) -> usize {
        p.cluster * self.points_per_cluster + p.member
    }

    pub fn point(&self, index: usize) -> Point {
        Point::new(index / self.points_per_cluster, index % self.points_per_cluster)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.cluster < self.clusters && p.member < self.points_per_cluster
    }

    pub fn grade(&self, p: Point) -> u32 {
        self.grades[p.cluster][p.member]
    }

    pub fn value(&self, p: Point) -> f64 {
        f64::from(self.grade(p)) / f64::from(self.grade_scale)
    }

    pub fn optimum(&self) -> Option<Point> {
        (0..self.state_count())
            .map(|i| self.point(i))
            .find(|&p| self.grade(p) == self.grade_scale)
    }

    /// Decodes program text into an in-range point.
    pub fn decode(&self, text: &str) -> Result<Point, SynthError> {
        let p = synth_decode(text)?;
        if self.contains(p) {
            Ok(p)
        } else {
            Err(SynthError::Parse)
        }
    }

    pub fn cluster_points(&self, cluster: usize) -> Vec<Point> {
        (0..self.points_per_cluster).map(|m| Point::new(cluster, m)).collect()
    }

    /// Labels of every available direction, in label order.
    pub fn direction_labels(&self) -> Vec<String> {
        (0..self.clusters)
            .map(Move::Jump)
            .chain(std::iter::once(Move::Stay))
            .map(Move::label)
            .collect()
    }

    /// A copy with clusters relabelled, members shuffled within each cluster
    /// and a home cluster that does not hold the optimum (when C > 1).
    pub fn shuffled<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut out = self.clone();
        out.grades.shuffle(rng);
        for row in &mut out.grades {
            row.shuffle(rng);
        }
        let opt_cluster = out.optimum().map_or(0, |p| p.cluster);
        let candidates: Vec<usize> = (0..out.clusters)
            .filter(|&c| c != opt_cluster || out.clusters == 1)
            .collect();
        out.home_cluster = candidates[rng.random_range(0..candidates.len())];
        out
    }

    fn concentrated_row_into(&self, from_cluster: usize, weight: f64, row: &mut [f64]) {
        let m = self.points_per_cluster as f64;
        let outside = (self.state_count() - self.points_per_cluster) as f64;
        for (i, v) in row.iter_mut().enumerate() {
            let c = i / self.points_per_cluster;
            if c == from_cluster {
                let stay = if outside == 0.0 { 1.0 } else { self.p_stay };
                *v += weight * stay / m;
            } else {
                *v += weight * (1.0 - self.p_stay) / outside;
            }
        }
    }

    /// Transition probabilities out of `from` under one move.
    pub fn move_row(&self, from: Point, mv: Move) -> Vec<f64> {
        let mut row = vec![0.0; self.state_count()];
        match mv {
            Move::Stay => self.concentrated_row_into(from.cluster, 1.0, &mut row),
            Move::Jump(target) => {
                let m = self.points_per_cluster as f64;
                for member in 0..self.points_per_cluster {
                    row[self.index(Point::new(target, member))] += self.q_jump / m;
                }
                self.concentrated_row_into(from.cluster, 1.0 - self.q_jump, &mut row);
            }
        }
        row
    }

    pub fn kernel_row(&self, from: Point, kernel: Kernel) -> Vec<f64> {
        match kernel {
            Kernel::Concentrated => self.move_row(from, Move::Stay),
            Kernel::Scattered => {
                let moves: Vec<Move> = (0..self.clusters).map(Move::Jump).chain([Move::Stay]).collect();
                let w = 1.0 / moves.len() as f64;
                let mut row = vec![0.0; self.state_count()];
                for mv in moves {
                    for (acc, v) in row.iter_mut().zip(self.move_row(from, mv)) {
                        *acc += w * v;
                    }
                }
                row
            }
        }
    }

    /// Row-stochastic transition matrix over all points.
    pub fn kernel_matrix(&self, kernel: Kernel) -> Result<Vec<Vec<f64>>, SynthError> {
        self.check_kernel_params()?;
        Ok((0..self.state_count())
            .map(|i| self.kernel_row(self.point(i), kernel))
            .collect())
    }

    /// Draws the next point for one move.
    pub fn sample_move<R: Rng + ?Sized>(&self, from: Point, mv: Move, rng: &mut R) -> Point {
        match mv {
            Move::Jump(target) if target < self.clusters && rng.random::<f64>() < self.q_jump => {
                Point::new(target, rng.random_range(0..self.points_per_cluster))
            }
            _ => self.sample_near(from.cluster, rng),
        }
    }

    /// Uniform over `cluster` with probability `p_stay`, else uniform over
    /// every other point.
    pub fn sample_near<R: Rng + ?Sized>(&self, cluster: usize, rng: &mut R) -> Point {
        if self.clusters == 1 || rng.random::<f64>() < self.p_stay {
            return Point::new(cluster, rng.random_range(0..self.points_per_cluster));
        }
        let outside = self.state_count() - self.points_per_cluster;
        let k = rng.random_range(0..outside);
        let mut idx = k;
        if idx >= cluster * self.points_per_cluster {
            idx += self.points_per_cluster;
        }
        self.point(idx)
    }
}

/// Flow out of `subset` over its mass under a uniform stationary measure.
pub fn conductance_of_matrix(matrix: &[Vec<f64>], subset: &[usize]) -> Result<f64, SynthError> {
    let n = matrix.len();
    let mut inside = vec![false; n];
    for &s in subset {
        if s >= n {
            return Err(SynthError::InvalidSubset(format!("state {s} out of range")));
        }
        inside[s] = true;
    }
    let size = inside.iter().filter(|&&b| b).count();
    if size == 0 || size == n {
        return Err(SynthError::InvalidSubset("subset must be non-empty and proper".into()));
    }
    let mut flow = 0.0;
    for (i, row) in matrix.iter().enumerate() {
        if !inside[i] {
            continue;
        }
        if row.len() != n {
            return Err(SynthError::InvalidSubset("matrix is not square".into()));
        }
        flow += row
            .iter()
            .zip(&inside)
            .filter(|(_, &b)| !b)
            .map(|(v, _)| v)
            .sum::<f64>();
    }
    Ok((flow / size as f64).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConductanceReport {
    pub subset: String,
    pub conductance: f64,
    pub kernel: Kernel,
}

pub fn estimate_conductance(
    landscape: &SyntheticLandscape,
    kernel: Kernel,
    subset: &[Point],
) -> Result<ConductanceReport, SynthError> {
    let matrix = landscape.kernel_matrix(kernel)?;
    if let Some(p) = subset.iter().find(|p| !landscape.contains(**p)) {
        return Err(SynthError::InvalidSubset(format!("point {p} out of range")));
    }
    let idx: Vec<usize> = subset.iter().map(|&p| landscape.index(p)).collect();
    let conductance = conductance_of_matrix(&matrix, &idx)?;
    Ok(ConductanceReport {
        subset: describe_subset(landscape, subset),
        conductance,
        kernel,
    })
}

fn describe_subset(landscape: &SyntheticLandscape, subset: &[Point]) -> String {
    let mut pts = subset.to_vec();
    pts.sort();
    pts.dedup();
    if let Some(first) = pts.first() {
        if pts.len() == landscape.points_per_cluster && pts.iter().all(|p| p.cluster == first.cluster) {
            return format!("cluster {}", first.cluster);
        }
    }
    pts.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

static LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"jump:c\d+|\bstay\b").unwrap());

/// Deterministic stand-in for a model: responses are a pure function of the
/// request sequence and the seed.
#[derive(Clone, Debug)]
pub struct SyntheticGenerator {
    landscape: SyntheticLandscape,
    rng: ChaCha8Rng,
    themes_seen: Vec<String>,
}

impl SyntheticGenerator {
    pub fn new(landscape: SyntheticLandscape, seed: u64) -> Self {
        Self {
            landscape,
            rng: ChaCha8Rng::seed_from_u64(seed),
            themes_seen: Vec::new(),
        }
    }

    pub fn landscape(&self) -> &SyntheticLandscape {
        &self.landscape
    }

    fn theme_ordinal(&mut self, theme: &str) -> usize {
        if let Some(i) = self.themes_seen.iter().position(|t| t == theme) {
            return i;
        }
        self.themes_seen.push(theme.to_string());
        self.themes_seen.len() - 1
    }

    fn seed_point(&mut self, theme: Option<&str>) -> Point {
        let offset = match theme.map(str::trim).filter(|t| !t.is_empty()) {
            Some(t) => self.theme_ordinal(t),
            None => 0,
        };
        let cluster = (self.landscape.home_cluster + offset) % self.landscape.clusters;
        self.landscape.sample_near(cluster, &mut self.rng)
    }

    fn solution_point(&mut self, req: &GenerationRequest) -> Point {
        let parents: Vec<Point> = req
            .context
            .parents
            .iter()
            .filter_map(|p| self.landscape.decode(&p.code).ok())
            .collect();
        let from = match parents.len() {
            0 => return self.seed_point(None),
            1 => parents[0],
            n => parents[self.rng.random_range(0..n)],
        };
        let mv = req
            .context
            .direction
            .as_deref()
            .and_then(Move::parse)
            .unwrap_or(Move::Stay);
        self.landscape.sample_move(from, mv, &mut self.rng)
    }

    fn pick_directions(&mut self, req: &GenerationRequest) -> Vec<String> {
        let labels = self.landscape.direction_labels();
        let k = (req.context.count.unwrap_or(1) as usize).min(labels.len());
        let mut chosen: Vec<String> = Vec::new();
        for line in &req.context.insights {
            if !line.starts_with("[improved]") {
                continue;
            }
            for m in LABEL.find_iter(line) {
                let l = m.as_str().to_string();
                if chosen.len() < k && labels.contains(&l) && !chosen.contains(&l) {
                    chosen.push(l);
                }
            }
        }
        let mut rest: Vec<String> = labels.iter().filter(|l| !chosen.contains(l)).cloned().collect();
        rest.shuffle(&mut self.rng);
        chosen.extend(rest.into_iter().take(k - chosen.len()));
        chosen.sort_by_key(|l| labels.iter().position(|x| x == l));
        chosen
    }

    fn insight_line(req: &GenerationRequest) -> Option<String> {
        req.context.reflection.as_ref().map(|r| {
            let label = Move::parse(&r.direction).map_or_else(|| r.direction.trim().to_string(), Move::label);
            format!("Insight: {label} {} the score", r.outcome.as_str())
        })
    }

    fn tests_text(&self, count: u32) -> String {
        let scale = self.landscape.grade_scale;
        (1..=count)
            .map(|j| {
                let t = (j * scale).div_ceil(count);
                format!("assert synth_grade() >= {t}\n")
            })
            .collect()
    }
}

impl Generator for SyntheticGenerator {
    fn generate(&mut self, req: &GenerationRequest) -> Result<GenerationResponse, GeneratorError> {
        req.validate()?;
        let text = match req.kind {
            GenerationKind::Seed => synth_encode(self.seed_point(req.context.theme.as_deref())),
            GenerationKind::Solution => synth_encode(self.solution_point(req)),
            GenerationKind::Directions => {
                let mut out = String::new();
                if let Some(line) = Self::insight_line(req) {
                    out.push_str(&line);
                    out.push('\n');
                }
                for (i, d) in self.pick_directions(req).iter().enumerate() {
                    out.push_str(&format!("Direction {}: {d}\n", i + 1));
                }
                out
            }
            GenerationKind::Insight => Self::insight_line(req).expect("validated reflection"),
            GenerationKind::Tests => self.tests_text(req.context.count.expect("validated count")),
        };
        Ok(GenerationResponse::text(text))
    }
}
