//! Oracle-labeled mission corpora for the ablation harness.

use abyssal_core::knowledge::{KnowledgeBase, RuntimeState};
use abyssal_core::mission::{Mission, Priority, Region, TargetRef, Task};
use abyssal_core::oracle::{label_mission, ViolationTag};
use abyssal_core::planner::PlannerConfig;
use abyssal_core::scenario::{Scenario, ScenarioError};
use abyssal_core::ActionKind;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;
use thiserror::Error;

/// Draws allowed per corpus mission before giving up on a tag.
pub const MAX_ATTEMPTS: usize = 20_000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("bad mix: {0}")]
    BadMix(String),
    #[error("could not draw a `{tag}` mission in {attempts} attempts")]
    Unreachable { tag: &'static str, attempts: usize },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Fractions of the corpus per violation tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mix(pub BTreeMap<ViolationTag, f64>);

impl Mix {
    pub fn new(pairs: &[(ViolationTag, f64)]) -> Result<Self, CorpusError> {
        let mix = Mix(pairs.iter().copied().collect());
        mix.check()?;
        Ok(mix)
    }

    pub fn fraction(&self, tag: ViolationTag) -> f64 {
        self.0.get(&tag).copied().unwrap_or(0.0)
    }

    fn check(&self) -> Result<(), CorpusError> {
        for (tag, f) in &self.0 {
            if !(0.0..=1.0).contains(f) {
                return Err(CorpusError::BadMix(format!("{} fraction {f} is outside [0, 1]", tag.as_str())));
            }
        }
        let sum: f64 = self.0.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadMix(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Mission count per tag: violation tags rounded to the nearest integer,
    /// the remainder to `none`.
    pub fn counts(&self, n: usize) -> Result<BTreeMap<ViolationTag, usize>, CorpusError> {
        self.check()?;
        let mut counts = BTreeMap::new();
        let mut used = 0usize;
        for tag in [ViolationTag::Capability, ViolationTag::Affordance, ViolationTag::Resource] {
            let c = (n as f64 * self.fraction(tag)).round() as usize;
            counts.insert(tag, c);
            used += c;
        }
        if used > n {
            return Err(CorpusError::BadMix(format!("rounded violation counts ({used}) exceed n = {n}")));
        }
        counts.insert(ViolationTag::None, n - used);
        Ok(counts)
    }
}

impl FromStr for Mix {
    type Err = CorpusError;

    /// `none=.5,capability=.2,affordance=.3`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut pairs = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| CorpusError::BadMix(format!("`{part}` is not tag=fraction")))?;
            let tag = ViolationTag::ALL
                .into_iter()
                .find(|t| t.as_str() == k.trim())
                .ok_or_else(|| CorpusError::BadMix(format!("unknown tag `{}`", k.trim())))?;
            let f: f64 = v.trim().parse().map_err(|_| CorpusError::BadMix(format!("`{}` is not a number", v.trim())))?;
            pairs.push((tag, f));
        }
        Mix::new(&pairs)
    }
}

impl Default for Mix {
    fn default() -> Self {
        Mix::new(&[(ViolationTag::None, 0.5), (ViolationTag::Capability, 0.2), (ViolationTag::Affordance, 0.3)])
            .expect("default mix is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub text: String,
    /// The oracle's overall verdict.
    pub feasible: bool,
    pub tag: ViolationTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed: u64,
    pub mix: Mix,
    pub missions: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn count(&self, tag: ViolationTag) -> usize {
        self.missions.iter().filter(|m| m.tag == tag).count()
    }
}

/// What a scenario offers to build missions from.
struct Palette {
    robots: Vec<String>,
    classes: Vec<String>,
    objects: Vec<String>,
    stations: Vec<String>,
}

impl Palette {
    fn new(kb: &KnowledgeBase, rt: &RuntimeState) -> Self {
        Palette {
            robots: rt.robots.keys().cloned().collect(),
            classes: kb.taxonomy.classes().iter().map(|c| c.name.clone()).collect(),
            objects: rt.declared_objects.iter().cloned().collect(),
            stations: rt.stations.keys().cloned().collect(),
        }
    }

    fn region(&self, rng: &mut ChaCha8Rng) -> Region {
        // One in five regions is large enough to strain the battery.
        let side = if rng.random_bool(0.2) { 100.0..400.0f64 } else { 2.0..60.0f64 };
        Region::new(
            rng.random_range(-50.0..50.0f64).round(),
            rng.random_range(-50.0..50.0f64).round(),
            rng.random_range(side.clone()).round(),
            rng.random_range(side).round(),
        )
    }

    fn task(&self, rng: &mut ChaCha8Rng, robot: &str) -> Task {
        let action = *ActionKind::ALL.choose(rng).expect("actions");
        let target = match action {
            ActionKind::Observe | ActionKind::Touch | ActionKind::Manipulate => {
                if self.objects.is_empty() || rng.random_bool(0.8) {
                    self.classes.choose(rng).map(|c| TargetRef::Class { name: c.clone() })
                } else {
                    self.objects.choose(rng).map(|o| TargetRef::Object { id: o.clone() })
                }
            }
            ActionKind::Survey => rng.random_bool(0.9).then(|| TargetRef::Region(self.region(rng))),
            ActionKind::Navigate => Some(TargetRef::Region(self.region(rng))),
            ActionKind::Communicate => {
                let peers: Vec<TargetRef> = self
                    .stations
                    .iter()
                    .map(|s| TargetRef::Station { id: s.clone() })
                    .chain(self.robots.iter().filter(|r| *r != robot).map(|r| TargetRef::Robot { id: r.clone() }))
                    .collect();
                peers.choose(rng).cloned()
            }
            ActionKind::Dock | ActionKind::Undock => None,
        };
        Task::new(robot, action, target)
    }

    fn mission(&self, rng: &mut ChaCha8Rng, id: &str) -> Option<Mission> {
        let robot = self.robots.choose(rng)?.clone();
        let n = rng.random_range(1..=3);
        let tasks = (0..n).map(|_| self.task(rng, &robot)).collect();
        Mission::new(id, Priority::Normal, tasks).ok()
    }
}

/// Samples `n` missions over the scenario's robots, actions and targets,
/// labels each with the oracle and keeps draws until every tag's quota is
/// met. Deterministic in `seed`.
pub fn generate_corpus(scenario: &Scenario, seed: u64, n: usize, mix: &Mix) -> Result<Corpus, CorpusError> {
    let counts = mix.counts(n)?;
    let kb = &scenario.knowledge;
    let rt = scenario.world()?.runtime_state();
    let cfg = PlannerConfig { mode: abyssal_core::planner::PlannerMode::Full, ..scenario.planner_config() };
    let palette = Palette::new(kb, &rt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut missions = Vec::with_capacity(n);
    for (tag, count) in counts {
        for _ in 0..count {
            let mut attempts = 0;
            let entry = loop {
                attempts += 1;
                if attempts > MAX_ATTEMPTS {
                    return Err(CorpusError::Unreachable { tag: tag.as_str(), attempts: MAX_ATTEMPTS });
                }
                let Some(m) = palette.mission(&mut rng, "m") else { continue };
                let label = label_mission(&m, kb, &rt, &cfg);
                if label.tag() == Some(tag) {
                    break (m, label.feasible(), tag);
                }
            };
            missions.push(entry);
        }
    }
    missions.shuffle(&mut rng);
    let missions = missions
        .into_iter()
        .enumerate()
        .map(|(i, (m, feasible, tag))| {
            let renamed = Mission::new(format!("c{seed}_{:02}", i + 1), m.priority(), m.tasks().to_vec()).expect("same tasks");
            CorpusEntry { text: renamed.render(), feasible, tag }
        })
        .collect();
    Ok(Corpus { seed, mix: mix.clone(), missions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use abyssal_core::fixtures;

    #[test]
    fn rounding_rule() {
        let mix: Mix = "none=.5,capability=.2,affordance=.3".parse().unwrap();
        let c = mix.counts(20).unwrap();
        assert_eq!((c[&ViolationTag::None], c[&ViolationTag::Capability], c[&ViolationTag::Affordance]), (10, 4, 6));
        assert_eq!(c[&ViolationTag::Resource], 0);
        // 7 × 0.3 = 2.1 → 2 each; the remainder goes to none.
        let mix: Mix = "capability=.3,affordance=.3,none=.4".parse().unwrap();
        let c = mix.counts(7).unwrap();
        assert_eq!((c[&ViolationTag::Capability], c[&ViolationTag::Affordance], c[&ViolationTag::None]), (2, 2, 3));
    }

    #[test]
    fn bad_mixes() {
        assert!(matches!("none=.6,capability=.6".parse::<Mix>(), Err(CorpusError::BadMix(_))));
        assert!(matches!("none=1.2".parse::<Mix>(), Err(CorpusError::BadMix(_))));
        assert!(matches!("none=.5,bogus=.5".parse::<Mix>(), Err(CorpusError::BadMix(_))));
        assert!(matches!("none=x".parse::<Mix>(), Err(CorpusError::BadMix(_))));
        assert!(matches!("none=1.5,capability=-.5".parse::<Mix>(), Err(CorpusError::BadMix(_))));
        // Half-up rounding of two 0.5 shares of n = 1 would need 2 missions.
        let mix: Mix = "capability=.5,affordance=.5".parse().unwrap();
        assert!(matches!(mix.counts(1), Err(CorpusError::BadMix(_))));
    }

    #[test]
    fn empty_corpus() {
        let c = generate_corpus(&fixtures::two_auv(), 1, 0, &Mix::default()).unwrap();
        assert!(c.missions.is_empty());
    }

    #[test]
    fn quotas_are_met_and_deterministic() {
        let s = fixtures::two_auv();
        let mix: Mix = "none=.4,capability=.2,affordance=.2,resource=.2".parse().unwrap();
        let a = generate_corpus(&s, 5, 20, &mix).unwrap();
        assert_eq!(a, generate_corpus(&s, 5, 20, &mix).unwrap());
        assert_ne!(a, generate_corpus(&s, 6, 20, &mix).unwrap());
        for (tag, want) in [(ViolationTag::None, 8), (ViolationTag::Capability, 4), (ViolationTag::Affordance, 4), (ViolationTag::Resource, 4)] {
            assert_eq!(a.count(tag), want, "{tag:?}");
        }
        for m in &a.missions {
            assert_eq!(m.feasible, m.tag == ViolationTag::None);
        }
    }
}
