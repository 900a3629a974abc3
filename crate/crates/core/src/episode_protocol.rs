//! Reproducible N-way K-shot episode sampling, episode files, and aggregation
//! of per-episode results into mean accuracy with a Student-t interval.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::rng;
use crate::variance_model::AccuracyPrior;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    pub name: String,
    pub example_ids: Vec<String>,
}

/// Labeled examples grouped by class, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    classes: Vec<ClassEntry>,
}

impl DatasetIndex {
    pub fn new(classes: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut names = HashSet::new();
        for (name, ids) in &classes {
            if !names.insert(name.as_str()) {
                return Err(Error::domain(format!("duplicate class name {name:?}")));
            }
            if ids.is_empty() {
                return Err(Error::domain(format!("class {name:?} has no examples")));
            }
            let mut seen = HashSet::with_capacity(ids.len());
            if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(Error::domain(format!("class {name:?} lists example {dup:?} twice")));
            }
        }
        Ok(Self {
            classes: classes
                .into_iter()
                .map(|(name, example_ids)| ClassEntry { name, example_ids })
                .collect(),
        })
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn class(&self, name: &str) -> Option<&ClassEntry> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Parses a JSON object mapping class name to an array of example IDs.
    /// Key order is kept; a repeated key is an error.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: OrderedClasses = serde_json::from_str(text)?;
        Self::new(raw.0)
    }

    pub fn to_json_string(&self) -> String {
        let entries: Vec<String> = self
            .classes
            .iter()
            .map(|c| {
                format!(
                    "{}:{}",
                    serde_json::Value::from(c.name.as_str()),
                    serde_json::Value::from(c.example_ids.clone())
                )
            })
            .collect();
        format!("{{{}}}", entries.join(","))
    }
}

struct OrderedClasses(Vec<(String, Vec<String>)>);

impl<'de> Deserialize<'de> for OrderedClasses {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ClassesVisitor;

        impl<'de> Visitor<'de> for ClassesVisitor {
            type Value = OrderedClasses;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping class names to arrays of example IDs")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry::<String, Vec<String>>()? {
                    out.push(entry);
                }
                Ok(OrderedClasses(out))
            }
        }

        deserializer.deserialize_map(ClassesVisitor)
    }
}

/// Queries taken per class after the support set is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryCount {
    PerClass(usize),
    /// Every remaining example, in index order.
    All,
}

impl std::str::FromStr for QueryCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(QueryCount::All);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(QueryCount::PerClass(n)),
            _ => Err(Error::domain(format!("query count must be a positive integer or \"all\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeClass {
    pub class_name: String,
    pub support_ids: Vec<String>,
    pub query_ids: Vec<String>,
}

/// One sampled episode. Serialized as a single JSON Lines record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSpec {
    pub episode_id: u64,
    pub seed: u64,
    pub ways: usize,
    pub shots: usize,
    pub per_class: Vec<EpisodeClass>,
}

impl EpisodeSpec {
    pub fn total_queries(&self) -> usize {
        self.per_class.iter().map(|c| c.query_ids.len()).sum()
    }

    /// Checks shape, support/query disjointness and that every ID exists in `index`.
    pub fn validate(&self, index: &DatasetIndex) -> Result<()> {
        if self.per_class.len() != self.ways {
            return Err(Error::domain(format!(
                "episode {} lists {} classes but ways = {}",
                self.episode_id,
                self.per_class.len(),
                self.ways
            )));
        }
        let mut classes = HashSet::new();
        for c in &self.per_class {
            if !classes.insert(c.class_name.as_str()) {
                return Err(Error::domain(format!("episode {} repeats class {:?}", self.episode_id, c.class_name)));
            }
            let entry = index
                .class(&c.class_name)
                .ok_or_else(|| Error::domain(format!("episode {}: unknown class {:?}", self.episode_id, c.class_name)))?;
            if c.support_ids.len() != self.shots {
                return Err(Error::domain(format!(
                    "episode {} class {:?} has {} support examples, expected {}",
                    self.episode_id,
                    c.class_name,
                    c.support_ids.len(),
                    self.shots
                )));
            }
            let known: HashSet<&str> = entry.example_ids.iter().map(String::as_str).collect();
            let mut used = HashSet::new();
            for id in c.support_ids.iter().chain(&c.query_ids) {
                if !known.contains(id.as_str()) {
                    return Err(Error::domain(format!(
                        "episode {} class {:?}: example {id:?} is not in the index",
                        self.episode_id, c.class_name
                    )));
                }
                if !used.insert(id.as_str()) {
                    return Err(Error::domain(format!(
                        "episode {} class {:?}: example {id:?} appears twice in support/query",
                        self.episode_id, c.class_name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Moves a uniform random `k`-subset of `items` to its front, in draw order.
fn partial_fisher_yates<T, R: Rng>(items: &mut [T], k: usize, rng: &mut R) {
    let n = items.len();
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        items.swap(i, j);
    }
}

/// Samples `count` episodes. Episode `e` draws from seed `splitmix64(master_seed ^ e)`.
pub fn sample_episodes(
    index: &DatasetIndex,
    ways: usize,
    shots: usize,
    queries: QueryCount,
    count: usize,
    master_seed: u64,
) -> Result<Vec<EpisodeSpec>> {
    if ways == 0 || shots == 0 {
        return Err(Error::domain("ways and shots must be at least 1"));
    }
    let available = index.classes.len();
    if available < ways {
        return Err(Error::domain(format!("{ways}-way episodes need {ways} classes, the index has {available}")));
    }
    let needed = shots
        + match queries {
            QueryCount::PerClass(q) => q,
            QueryCount::All => 1,
        };
    if let Some(c) = index.classes.iter().find(|c| c.example_ids.len() < needed) {
        return Err(Error::domain(format!(
            "class {:?} has {} examples, but {shots} support + {} queries need {needed}",
            c.name,
            c.example_ids.len(),
            match queries {
                QueryCount::PerClass(q) => q.to_string(),
                QueryCount::All => "at least 1".to_string(),
            }
        )));
    }

    let episodes = (0..count as u64)
        .map(|episode_id| {
            let seed = rng::substream_seed(master_seed, episode_id);
            let mut rng = rng::stream(seed);
            let mut class_order: Vec<usize> = (0..available).collect();
            partial_fisher_yates(&mut class_order, ways, &mut rng);

            let per_class = class_order[..ways]
                .iter()
                .map(|&ci| {
                    let entry = &index.classes[ci];
                    let n = entry.example_ids.len();
                    let mut order: Vec<usize> = (0..n).collect();
                    let drawn = match queries {
                        QueryCount::PerClass(q) => shots + q,
                        QueryCount::All => shots,
                    };
                    partial_fisher_yates(&mut order, drawn, &mut rng);
                    let id = |i: &usize| entry.example_ids[*i].clone();
                    let support_ids: Vec<String> = order[..shots].iter().map(id).collect();
                    let query_ids: Vec<String> = match queries {
                        QueryCount::PerClass(q) => order[shots..shots + q].iter().map(id).collect(),
                        QueryCount::All => {
                            let mut in_support = vec![false; n];
                            for &i in &order[..shots] {
                                in_support[i] = true;
                            }
                            (0..n).filter(|&i| !in_support[i]).map(|i| id(&i)).collect()
                        }
                    };
                    EpisodeClass {
                        class_name: entry.name.clone(),
                        support_ids,
                        query_ids,
                    }
                })
                .collect();

            EpisodeSpec {
                episode_id,
                seed,
                ways,
                shots,
                per_class,
            }
        })
        .collect();
    Ok(episodes)
}

pub fn write_episodes_jsonl<W: Write>(episodes: &[EpisodeSpec], mut out: W) -> Result<()> {
    for e in episodes {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads one episode per non-blank line.
pub fn read_episodes_jsonl<R: BufRead>(input: R) -> Result<Vec<EpisodeSpec>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let spec = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("episode line {}: {e}", lineno + 1)))?;
        out.push(spec);
    }
    Ok(out)
}

/// Outcome of evaluating one episode, kept as integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawResult")]
pub struct EpisodeResult {
    episode_id: u64,
    correct: u64,
    total: u64,
}

#[derive(Deserialize)]
struct RawResult {
    episode_id: u64,
    correct: u64,
    total: u64,
}

impl TryFrom<RawResult> for EpisodeResult {
    type Error = Error;

    fn try_from(r: RawResult) -> Result<Self> {
        EpisodeResult::new(r.episode_id, r.correct, r.total)
    }
}

impl EpisodeResult {
    pub fn new(episode_id: u64, correct: u64, total: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::domain(format!("episode {episode_id}: total must be positive")));
        }
        if correct > total {
            return Err(Error::domain(format!(
                "episode {episode_id}: correct ({correct}) exceeds total ({total})"
            )));
        }
        Ok(Self {
            episode_id,
            correct,
            total,
        })
    }

    pub fn episode_id(&self) -> u64 {
        self.episode_id
    }

    pub fn correct(&self) -> u64 {
        self.correct
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Reads a `episode_id,correct,total` CSV with header.
pub fn read_results_csv<R: std::io::Read>(input: R) -> Result<Vec<EpisodeResult>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["episode_id", "correct", "total"] {
        return Err(Error::format(format!(
            "results header must be episode_id,correct,total, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<RawResult>() {
        out.push(EpisodeResult::try_from(row?)?);
    }
    Ok(out)
}

pub fn write_results_csv<W: Write>(results: &[EpisodeResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode_id", "correct", "total"])?;
    for r in results {
        w.write_record([r.episode_id.to_string(), r.correct.to_string(), r.total.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub episodes: u64,
    pub mean_acc: f64,
    /// Inter-episode sample standard deviation (divisor `n − 1`).
    pub std_acc: f64,
    /// `t(0.975, n−1) · std_acc / sqrt(n)`.
    pub ci95_halfwidth: f64,
}

impl fmt::Display for AggregateReport {
    /// Percentage points with two decimals, e.g. `93.13 ± 0.51`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean_acc * 100.0, self.ci95_halfwidth * 100.0)
    }
}

/// Two-sided 95% Student-t quantile, `t(0.975, dof)`.
pub fn t_quantile_975(dof: u64) -> Result<f64> {
    let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(t.inverse_cdf(0.975))
}

pub fn aggregate(results: &[EpisodeResult]) -> Result<AggregateReport> {
    if results.len() < 2 {
        return Err(Error::domain(format!(
            "a confidence interval needs at least 2 episode results, got {}",
            results.len()
        )));
    }
    let mut ids = HashSet::with_capacity(results.len());
    if let Some(dup) = results.iter().find(|r| !ids.insert(r.episode_id)) {
        return Err(Error::domain(format!("episode {} appears more than once", dup.episode_id)));
    }
    // Shifted by the first accuracy so identical accuracies give exactly zero spread.
    let n = results.len() as f64;
    let shift = results[0].accuracy();
    let (sum, sum_sq) = results.iter().fold((0.0, 0.0), |(s, s2), r| {
        let d = r.accuracy() - shift;
        (s + d, s2 + d * d)
    });
    let mean = shift + sum / n;
    let std = ((sum_sq - sum * sum / n).max(0.0) / (n - 1.0)).sqrt();
    let t = t_quantile_975(results.len() as u64 - 1)?;
    Ok(AggregateReport {
        episodes: results.len() as u64,
        mean_acc: mean,
        std_acc: std,
        ci95_halfwidth: t * std / n.sqrt(),
    })
}

/// Prior for planning from a preliminary run: the measured mean and
/// inter-episode std. The std still contains query-sampling noise.
pub fn prior_from_results(results: &[EpisodeResult]) -> Result<AccuracyPrior> {
    let report = aggregate(results)?;
    AccuracyPrior::new(report.mean_acc, report.std_acc)
}
