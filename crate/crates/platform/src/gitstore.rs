//! Git substrate for desk-scale runs: a "repository" is a JSON file
//! declaring a commit DAG with a full tree snapshot per commit, and a
//! "git URL" is the path to that file. Clones and checkouts are cached
//! with observable hit counters so callers can verify they are not
//! re-cloning per build.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crashgym_core::model::CommitId;
use crashgym_core::patch::Tree;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GitError {
    #[error("clone of {url} failed: {message}")]
    CloneFailure { url: String, message: String },
    #[error("unknown commit {0}")]
    UnknownCommit(String),
    #[error("commit {0} is a root commit")]
    RootCommit(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepoCommit {
    pub id: String,
    #[serde(default)]
    pub parents: Vec<String>,
    pub tree: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepoFile {
    pub commits: Vec<RepoCommit>,
}

pub struct GitStore {
    url: String,
    commits: BTreeMap<String, RepoCommit>,
    checkout_cache: BTreeMap<String, Tree>,
    checkout_hits: u64,
}

impl GitStore {
    /// "Clone" the repository file at `url`.
    pub fn clone_repo(url: &str) -> Result<GitStore, GitError> {
        let text = fs::read_to_string(Path::new(url)).map_err(|e| GitError::CloneFailure {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        let repo: RepoFile =
            serde_json::from_str(&text).map_err(|e| GitError::CloneFailure {
                url: url.to_string(),
                message: e.to_string(),
            })?;
        let mut commits = BTreeMap::new();
        for commit in repo.commits {
            commits.insert(commit.id.clone(), commit);
        }
        Ok(GitStore { url: url.to_string(), commits, checkout_cache: BTreeMap::new(), checkout_hits: 0 })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn commit_exists(&self, commit_id: &str) -> bool {
        self.commits.contains_key(commit_id)
    }

    /// First-parent resolution, the only merge-order notion the
    /// platform uses.
    pub fn first_parent(&self, commit_id: &str) -> Result<CommitId, GitError> {
        let commit = self
            .commits
            .get(commit_id)
            .ok_or_else(|| GitError::UnknownCommit(commit_id.to_string()))?;
        match commit.parents.first() {
            Some(p) => Ok(CommitId(p.clone())),
            None => Err(GitError::RootCommit(commit_id.to_string())),
        }
    }

    pub fn tree_at(&self, commit_id: &str) -> Result<&BTreeMap<String, String>, GitError> {
        self.commits
            .get(commit_id)
            .map(|c| &c.tree)
            .ok_or_else(|| GitError::UnknownCommit(commit_id.to_string()))
    }

    /// Materialize a mutable workspace for `commit_id`. Repeated
    /// checkouts of the same commit are served from cache.
    pub fn checkout(&mut self, commit_id: &str) -> Result<Tree, GitError> {
        if let Some(tree) = self.checkout_cache.get(commit_id) {
            self.checkout_hits += 1;
            return Ok(tree.clone());
        }
        let tree: Tree = self.tree_at(commit_id)?.clone();
        self.checkout_cache.insert(commit_id.to_string(), tree.clone());
        Ok(tree)
    }

    pub fn checkout_hits(&self) -> u64 {
        self.checkout_hits
    }
}

/// Caches one `GitStore` per URL so a worker never clones the same
/// repository twice; the hit counter makes that observable in tests.
#[derive(Default)]
pub struct GitManager {
    stores: BTreeMap<String, GitStore>,
    clone_hits: u64,
}

impl GitManager {
    pub fn new() -> GitManager {
        GitManager::default()
    }

    pub fn open(&mut self, url: &str) -> Result<&mut GitStore, GitError> {
        if self.stores.contains_key(url) {
            self.clone_hits += 1;
        } else {
            let store = GitStore::clone_repo(url)?;
            self.stores.insert(url.to_string(), store);
        }
        Ok(self.stores.get_mut(url).expect("just inserted"))
    }

    pub fn clone_hits(&self) -> u64 {
        self.clone_hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn write_repo(dir: &Path, repo: &RepoFile) -> String {
        let path = dir.join("repo.json");
        let mut f = fs::File::create(&path).unwrap();
        write!(f, "{}", serde_json::to_string_pretty(repo).unwrap()).unwrap();
        path.to_string_lossy().into_owned()
    }

    fn linear_repo() -> RepoFile {
        RepoFile {
            commits: vec![
                RepoCommit {
                    id: "a1".into(),
                    parents: vec![],
                    tree: BTreeMap::from([("f.c".into(), "one\n".into())]),
                },
                RepoCommit {
                    id: "b2".into(),
                    parents: vec!["a1".into()],
                    tree: BTreeMap::from([("f.c".into(), "two\n".into())]),
                },
            ],
        }
    }

    #[test]
    fn clone_parent_and_checkout() {
        let dir = tempfile::tempdir().unwrap();
        let url = write_repo(dir.path(), &linear_repo());
        let mut store = GitStore::clone_repo(&url).unwrap();

        assert!(store.commit_exists("b2"));
        assert!(!store.commit_exists("zz"));
        assert_eq!(store.first_parent("b2").unwrap(), CommitId("a1".into()));
        assert!(matches!(store.first_parent("a1"), Err(GitError::RootCommit(_))));
        assert!(matches!(store.first_parent("zz"), Err(GitError::UnknownCommit(_))));

        let tree = store.checkout("b2").unwrap();
        assert_eq!(tree["f.c"], "two\n");
        assert_eq!(store.checkout_hits(), 0);
        store.checkout("b2").unwrap();
        assert_eq!(store.checkout_hits(), 1);
    }

    #[test]
    fn manager_clones_each_url_once() {
        let dir = tempfile::tempdir().unwrap();
        let url = write_repo(dir.path(), &linear_repo());
        let mut mgr = GitManager::new();
        mgr.open(&url).unwrap();
        assert_eq!(mgr.clone_hits(), 0);
        mgr.open(&url).unwrap();
        mgr.open(&url).unwrap();
        assert_eq!(mgr.clone_hits(), 2);
        assert!(matches!(
            mgr.open(dir.path().join("missing.json").to_str().unwrap()),
            Err(GitError::CloneFailure { .. })
        ));
    }

    /// Generated DAGs up to 200 nodes: first-parent answers must match
    /// a brute-force scan of the declared parent lists.
    #[test]
    fn first_parent_matches_dag_oracle() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..12u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(0x9a10 + seed);
            let n = rng.gen_range(1..=200);
            let mut commits = Vec::new();
            for i in 0..n {
                let parent_count = if i == 0 { 0 } else { rng.gen_range(1..=3.min(i)) };
                let mut parents = Vec::new();
                while parents.len() < parent_count {
                    let p = format!("c{}", rng.gen_range(0..i));
                    if !parents.contains(&p) {
                        parents.push(p);
                    }
                }
                commits.push(RepoCommit {
                    id: format!("c{i}"),
                    parents,
                    tree: BTreeMap::from([("k".into(), format!("v{i}\n"))]),
                });
            }
            let declared: BTreeMap<String, Vec<String>> = commits
                .iter()
                .map(|c| (c.id.clone(), c.parents.clone()))
                .collect();
            let url = write_repo(dir.path(), &RepoFile { commits });
            let store = GitStore::clone_repo(&url).unwrap();
            for (id, parents) in &declared {
                match store.first_parent(id) {
                    Ok(p) => assert_eq!(Some(&p.0), parents.first()),
                    Err(GitError::RootCommit(_)) => assert!(parents.is_empty()),
                    Err(e) => panic!("unexpected {e}"),
                }
            }
        }
    }
}
