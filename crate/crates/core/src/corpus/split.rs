use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IdMaps, Interaction, InteractionDataset};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ASSIGNMENT_FILE: &str = "split.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    /// One uniform shuffle over all interactions.
    Global,
    /// Each user's interactions are split separately with the same fractions.
    PerUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Validation,
    Test,
}

impl Part {
    fn as_str(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Validation => "validation",
            Part::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Part::Train),
            "validation" => Some(Part::Validation),
            "test" => Some(Part::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub test_frac: f64,
    pub valid_frac_of_train: f64,
    pub seed: u64,
    pub strategy: SplitStrategy,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_frac: 0.3,
            valid_frac_of_train: 0.1,
            seed: 0,
            strategy: SplitStrategy::Global,
        }
    }
}

impl SplitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test fraction {} not in (0, 1)",
                self.test_frac
            )));
        }
        if !(self.valid_frac_of_train >= 0.0 && self.valid_frac_of_train < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "validation fraction {} not in [0, 1)",
                self.valid_frac_of_train
            )));
        }
        Ok(())
    }
}

/// Train/validation/test partition of a dataset. All three views share the
/// parent's id maps, so indices agree across them.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub parent: InteractionDataset,
    /// Part of each parent interaction, aligned with `parent.interactions()`.
    pub parts: Vec<Part>,
    pub train: InteractionDataset,
    pub validation: InteractionDataset,
    pub test: InteractionDataset,
    pub config: SplitConfig,
    /// Held-out interactions moved back to train so that every held-out
    /// user keeps at least one training edge.
    pub moves: Vec<Interaction>,
}

/// Randomly partitions `ds` with the global strategy.
pub fn split(
    ds: &InteractionDataset,
    test_frac: f64,
    valid_frac_of_train: f64,
    seed: u64,
) -> Result<SplitDataset> {
    SplitDataset::new(
        ds,
        SplitConfig {
            test_frac,
            valid_frac_of_train,
            seed,
            strategy: SplitStrategy::Global,
        },
    )
}

fn round_count(total: usize, frac: f64) -> usize {
    ((total as f64 * frac).round() as usize).min(total)
}

impl SplitDataset {
    pub fn new(ds: &InteractionDataset, config: SplitConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = ds.len();
        let mut parts = vec![Part::Train; n];

        let assign = |order: &[usize], parts: &mut [Part]| {
            let n_test = round_count(order.len(), config.test_frac);
            let n_valid = round_count(order.len() - n_test, config.valid_frac_of_train);
            for &e in &order[..n_test] {
                parts[e] = Part::Test;
            }
            for &e in &order[n_test..n_test + n_valid] {
                parts[e] = Part::Validation;
            }
        };

        match config.strategy {
            SplitStrategy::Global => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                assign(&order, &mut parts);
            }
            SplitStrategy::PerUser => {
                let mut by_user = vec![Vec::new(); ds.num_users()];
                for (e, x) in ds.interactions().iter().enumerate() {
                    by_user[x.user as usize].push(e);
                }
                for order in &mut by_user {
                    order.shuffle(&mut rng);
                    assign(order, &mut parts);
                }
            }
        }

        // Re-balance users left without a training edge.
        let mut has_train = vec![false; ds.num_users()];
        let mut held_out: Vec<Vec<usize>> = vec![Vec::new(); ds.num_users()];
        for (e, x) in ds.interactions().iter().enumerate() {
            match parts[e] {
                Part::Train => has_train[x.user as usize] = true,
                _ => held_out[x.user as usize].push(e),
            }
        }
        let mut moves = Vec::new();
        for u in 0..ds.num_users() {
            if !has_train[u] && !held_out[u].is_empty() {
                let e = held_out[u][rng.gen_range(0..held_out[u].len())];
                parts[e] = Part::Train;
                moves.push(ds.interactions()[e]);
            }
        }

        Self::from_parts(ds.clone(), parts, config, moves)
    }

    fn from_parts(
        parent: InteractionDataset,
        parts: Vec<Part>,
        config: SplitConfig,
        moves: Vec<Interaction>,
    ) -> Result<Self> {
        let pick = |p: Part| -> Result<InteractionDataset> {
            let xs = parent
                .interactions()
                .iter()
                .zip(&parts)
                .filter(|(_, &q)| q == p)
                .map(|(x, _)| *x)
                .collect();
            InteractionDataset::new(parent.shared_ids(), xs)
        };
        Ok(Self {
            train: pick(Part::Train)?,
            validation: pick(Part::Validation)?,
            test: pick(Part::Test)?,
            parent,
            parts,
            config,
            moves,
        })
    }

    pub fn num_users(&self) -> usize {
        self.parent.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.parent.num_items()
    }

    pub fn ids(&self) -> &IdMaps {
        self.parent.ids()
    }

    pub fn manifest(&self) -> SplitManifest {
        let ids = self.ids();
        SplitManifest {
            format_version: 1,
            seed: self.config.seed,
            test_frac: self.config.test_frac,
            valid_frac_of_train: self.config.valid_frac_of_train,
            strategy: self.config.strategy,
            num_users: self.num_users(),
            num_items: self.num_items(),
            num_interactions: self.parent.len(),
            num_train: self.train.len(),
            num_validation: self.validation.len(),
            num_test: self.test.len(),
            moves: self
                .moves
                .iter()
                .map(|x| {
                    [
                        ids.users.external(x.user).to_string(),
                        ids.items.external(x.item).to_string(),
                    ]
                })
                .collect(),
            source: None,
        }
    }

    /// Writes `manifest.json` and the per-interaction assignment `split.tsv`
    /// into `dir`. Rows keep the parent order, so reading them back
    /// reproduces the same dense indices.
    pub fn write(&self, dir: &Path, source: Option<SourceInfo>) -> Result<SplitManifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = self.manifest();
        manifest.source = source;

        let tsv = dir.join(ASSIGNMENT_FILE);
        let tmp = dir.join(format!("{ASSIGNMENT_FILE}.tmp"));
        {
            let f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let mut w = BufWriter::new(f);
            let ids = self.ids();
            for (x, p) in self.parent.interactions().iter().zip(&self.parts) {
                writeln!(
                    w,
                    "{}\t{}\t{}",
                    ids.users.external(x.user),
                    ids.items.external(x.item),
                    p.as_str()
                )
                .map_err(|e| Error::io(&tmp, e))?;
            }
            w.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, &tsv).map_err(|e| Error::io(&tsv, e))?;

        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        crate::io::write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())?;
        Ok(manifest)
    }

    /// Reads a split written by [`SplitDataset::write`].
    pub fn read(dir: &Path) -> Result<(Self, SplitManifest)> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: SplitManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", mpath.display())))?;

        let tpath = dir.join(ASSIGNMENT_FILE);
        let f = fs::File::open(&tpath).map_err(|e| Error::io(&tpath, e))?;
        let mut ids = IdMaps::default();
        let mut interactions = Vec::new();
        let mut parts = Vec::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&tpath, e))?;
            let cols: Vec<&str> = line.split('\t').collect();
            let part = (cols.len() == 3).then(|| Part::parse(cols[2])).flatten();
            let Some(part) = part else {
                return Err(Error::MalformedRow {
                    path: tpath.clone(),
                    line: lineno + 1,
                    message: "expected user<TAB>item<TAB>part".into(),
                });
            };
            let u = ids.users.intern(cols[0]);
            let i = ids.items.intern(cols[1]);
            interactions.push(Interaction::new(u, i));
            parts.push(part);
        }
        let parent = InteractionDataset::new(Arc::new(ids), interactions)?;
        let mut moves = Vec::with_capacity(manifest.moves.len());
        for [u, i] in &manifest.moves {
            let user = parent
                .ids()
                .users
                .dense(u)
                .ok_or_else(|| Error::UnknownId(u.clone()))?;
            let item = parent
                .ids()
                .items
                .dense(i)
                .ok_or_else(|| Error::UnknownId(i.clone()))?;
            moves.push(Interaction::new(user, item));
        }
        let config = SplitConfig {
            test_frac: manifest.test_frac,
            valid_frac_of_train: manifest.valid_frac_of_train,
            seed: manifest.seed,
            strategy: manifest.strategy,
        };
        let split = Self::from_parts(parent, parts, config, moves)?;
        let counts = (
            split.num_users(),
            split.num_items(),
            split.train.len(),
            split.validation.len(),
            split.test.len(),
        );
        let expected = (
            manifest.num_users,
            manifest.num_items,
            manifest.num_train,
            manifest.num_validation,
            manifest.num_test,
        );
        if counts != expected {
            return Err(Error::Format(format!(
                "{} disagrees with {}: counts {counts:?} vs {expected:?}",
                tpath.display(),
                mpath.display()
            )));
        }
        Ok((split, manifest))
    }
}

/// Where a split came from, recorded so it can be re-created from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub path: String,
    pub format: String,
    pub threshold: Option<f64>,
    pub k_core: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub format_version: u32,
    pub seed: u64,
    pub test_frac: f64,
    pub valid_frac_of_train: f64,
    pub strategy: SplitStrategy,
    pub num_users: usize,
    pub num_items: usize,
    pub num_interactions: usize,
    pub num_train: usize,
    pub num_validation: usize,
    pub num_test: usize,
    /// `[user, item]` external ids moved from held-out parts back to train.
    pub moves: Vec<[String; 2]>,
    #[serde(default)]
    pub source: Option<SourceInfo>,
}
