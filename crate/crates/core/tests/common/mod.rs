//! The twelve-commit revert fixture and its hand-derived ledger.
//!
//! Files: `a.c` holds alpha, beta, gamma and zeta; `b.c` holds delta; plus a
//! README. One commit per day from `T0`:
//!
//! | day | name | change                                   | message                          |
//! |-----|------|------------------------------------------|----------------------------------|
//! | 0   | C1   | all files (root)                         | initial import                   |
//! | 1   | K3   | gamma                                    | add gamma fast path              |
//! | 2   | C2   | alpha                                    | tune alpha threshold (take N)    |
//! | 3   | Y    | delta, side branch off K3                | document delta limits (take M)   |
//! | 4   | C3   | beta                                     | fix beta overflow                |
//! | 5   | C4   | gamma + README                           | rework gamma and docs            |
//! | 6   | R1   | alpha back                               | reverts C2 by full hash          |
//! | 7   | R2   | beta back                                | reverts C3 by a 10-char prefix   |
//! | 8   | R3   | README                                   | reverts C4 by full hash          |
//! | 9   | R4   | README                                   | "Revert <7-char prefix>"         |
//! | 10  | K1   | zeta                                     | simplify zeta loop               |
//! | 11  | K1f  | zeta + README                            | fix regression in zeta           |
//!
//! N and M are searched so that C2 and Y share their first seven hex digits,
//! which makes R4's reference ambiguous.
//!
//! Hand enumeration:
//! - single-function candidates: K3, C2, Y, C3, R1, R2, K1
//! - rejections: root C1; file count C4, K1f; extension R3, R4
//! - revert links: R1->C2, R2->C3, R3->C4; R4 ambiguous
//! - defective candidates: C2, C3 (C4 touches two files)
//! - clean pool (not a revert or revert target, within 90 days): K3, Y, K1
//! - screen: K3 passes (gamma next touched by C4, no keyword); Y never
//!   modified again; K1 hit by "regression" in K1f
//! - offline triage: C2 discarded (no defect wording anywhere), C3 kept as
//!   Defective->Defective ("fix", "overflow"), K3 kept as Clean->Clean ("add")

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use git2::{ObjectType, Oid, Repository, Signature, Time};

pub const T0: i64 = 1_650_000_000;
pub const DAY: i64 = 86_400;

pub struct Fixture {
    pub repo: Repository,
    /// Fixture commit name -> full hash.
    pub hashes: BTreeMap<&'static str, String>,
    pub ambiguous_prefix: String,
}

impl Fixture {
    pub fn hash(&self, name: &str) -> &str {
        &self.hashes[name]
    }

    /// Fixture name of a full hash.
    pub fn name(&self, hash: &str) -> &'static str {
        self.hashes
            .iter()
            .find(|(_, h)| h.as_str() == hash)
            .map(|(n, _)| *n)
            .unwrap_or_else(|| panic!("unknown hash {hash}"))
    }
}

fn func(name: &str, body: &str) -> String {
    format!("static int {name}(int x)\n{{\n    int y = x;\n    {body}\n    return y;\n}}\n")
}

#[derive(Clone)]
struct State {
    alpha: &'static str,
    beta: &'static str,
    gamma: &'static str,
    zeta: &'static str,
    delta: &'static str,
    readme: &'static str,
}

impl State {
    fn files(&self) -> Vec<(&'static str, String)> {
        vec![
            (
                "a.c",
                [func("alpha", self.alpha), func("beta", self.beta), func("gamma", self.gamma), func("zeta", self.zeta)].join("\n"),
            ),
            ("b.c", func("delta", self.delta)),
            ("README", format!("fixture\n{}\n", self.readme)),
        ]
    }
}

fn tree(repo: &Repository, s: &State) -> Oid {
    let mut tb = repo.treebuilder(None).unwrap();
    for (name, text) in s.files() {
        let blob = repo.blob(text.as_bytes()).unwrap();
        tb.insert(name, blob, 0o100644).unwrap();
    }
    tb.write().unwrap()
}

fn sig(day: i64) -> Signature<'static> {
    Signature::new("dev", "dev@example.com", &Time::new(T0 + day * DAY, 0)).unwrap()
}

fn commit(repo: &Repository, branch: &str, day: i64, msg: &str, s: &State, parent: Option<&str>) -> String {
    let tree = repo.find_tree(tree(repo, s)).unwrap();
    let parents: Vec<_> = parent.map(|p| repo.find_commit(Oid::from_str(p).unwrap()).unwrap()).into_iter().collect();
    let refs: Vec<_> = parents.iter().collect();
    let oid = repo.commit(None, &sig(day), &sig(day), msg, &tree, &refs).unwrap();
    repo.reference(&format!("refs/heads/{branch}"), oid, true, "fixture").unwrap();
    oid.to_string()
}

fn buffer_hash(repo: &Repository, day: i64, msg: &str, tree: &git2::Tree<'_>, parent: &git2::Commit<'_>) -> Oid {
    let buf = repo.commit_create_buffer(&sig(day), &sig(day), msg, tree, &[parent]).unwrap();
    Oid::hash_object(ObjectType::Commit, &buf).unwrap()
}

fn prefix28(oid: Oid) -> u32 {
    let b = oid.as_bytes();
    (u32::from_be_bytes([b[0], b[1], b[2], b[3]])) >> 4
}

pub fn c2_message(n: u32) -> String {
    format!("tune alpha threshold (take {n})\n")
}

pub fn y_message(m: u32) -> String {
    format!("document delta limits (take {m})\n")
}

pub fn build(dir: &Path) -> Fixture {
    let repo = Repository::init(dir).unwrap();
    let mut h = BTreeMap::new();
    let mut s = State {
        alpha: "y += 1;",
        beta: "y += 2;",
        gamma: "y += 3;",
        zeta: "y += 4;",
        delta: "y += 5;",
        readme: "v1",
    };
    h.insert("C1", commit(&repo, "main", 0, "initial import\n", &s, None));
    repo.set_head("refs/heads/main").unwrap();

    s.gamma = "y += 3 * x;";
    h.insert("K3", commit(&repo, "main", 1, "add gamma fast path\n", &s, Some(&h["C1"])));

    let base = s.clone();
    let mut c2_state = base.clone();
    c2_state.alpha = "y += x > 10 ? 1 : 2;";
    let mut y_state = base.clone();
    y_state.delta = "y += 5; /* limit 64 */";

    // birthday search over 28-bit prefixes
    let (n, m) = {
        let parent = repo.find_commit(Oid::from_str(&h["K3"]).unwrap()).unwrap();
        let c2_tree = repo.find_tree(tree(&repo, &c2_state)).unwrap();
        let y_tree = repo.find_tree(tree(&repo, &y_state)).unwrap();
        let mut y_prefixes: HashMap<u32, u32> = HashMap::new();
        for m in 0..200_000u32 {
            y_prefixes.insert(prefix28(buffer_hash(&repo, 3, &y_message(m), &y_tree, &parent)), m);
        }
        (0u32..)
            .find_map(|n| {
                let p = prefix28(buffer_hash(&repo, 2, &c2_message(n), &c2_tree, &parent));
                y_prefixes.get(&p).map(|&m| (n, m))
            })
            .unwrap()
    };
    h.insert("C2", commit(&repo, "main", 2, &c2_message(n), &c2_state, Some(&h["K3"])));
    h.insert("Y", commit(&repo, "side", 3, &y_message(m), &y_state, Some(&h["K3"])));
    assert_eq!(h["C2"][..7], h["Y"][..7]);
    assert_ne!(h["C2"], h["Y"]);
    let ambiguous_prefix = h["C2"][..7].to_string();

    let mut s = c2_state;
    s.beta = "y += 2 * (x & 0xff);";
    h.insert("C3", commit(&repo, "main", 4, "fix beta overflow\n", &s, Some(&h["C2"])));
    s.gamma = "y += 4 * x;";
    s.readme = "v2";
    h.insert("C4", commit(&repo, "main", 5, "rework gamma and docs\n", &s, Some(&h["C3"])));
    s.alpha = base.alpha;
    let r1 = format!("Revert \"tune alpha threshold (take {n})\"\n\nThis reverts commit {}.\n", h["C2"]);
    h.insert("R1", commit(&repo, "main", 6, &r1, &s, Some(&h["C4"])));
    s.beta = base.beta;
    let r2 = format!("Revert \"fix beta overflow\"\n\nThis reverts commit {}.\n", &h["C3"][..10]);
    h.insert("R2", commit(&repo, "main", 7, &r2, &s, Some(&h["R1"])));
    s.readme = "v1";
    let r3 = format!("Revert \"rework gamma and docs\"\n\nThis reverts commit {}.\n", h["C4"]);
    h.insert("R3", commit(&repo, "main", 8, &r3, &s, Some(&h["R2"])));
    s.readme = "v3";
    let r4 = format!("Revert {ambiguous_prefix}\n\nSee the earlier discussion.\n");
    h.insert("R4", commit(&repo, "main", 9, &r4, &s, Some(&h["R3"])));
    s.zeta = "y += 4; y -= 0;";
    h.insert("K1", commit(&repo, "main", 10, "simplify zeta loop\n", &s, Some(&h["R4"])));
    s.zeta = "y += 4;";
    s.readme = "v4";
    h.insert("K1f", commit(&repo, "main", 11, "fix regression in zeta\n", &s, Some(&h["K1"])));

    // no third commit shares the ambiguous prefix
    assert_eq!(h.values().filter(|x| x.starts_with(&ambiguous_prefix)).count(), 2);
    drop(repo);
    Fixture {
        repo: Repository::open(dir).unwrap(),
        hashes: h,
        ambiguous_prefix,
    }
}
