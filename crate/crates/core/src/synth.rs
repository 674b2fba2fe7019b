//! Seeded synthetic bug corpus with paraphrased duplicate clusters, plus a
//! matching word-vector store. Used by the benchmark, examples and tests.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Duration, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BugReport, Corpus, Severity, Status};
use crate::embedding::WordVectorStore;
use crate::error::{Error, Result};
use crate::preprocess::{canonical_token, split_tokens, CleanConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_bugs: usize,
    /// Share of bugs that belong to a duplicate cluster.
    pub duplicate_share: f64,
    pub min_cluster: usize,
    pub max_cluster: usize,
    /// Extra paraphrases of existing clusters kept out of the corpus.
    pub n_planted: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_bugs: 2000,
            duplicate_share: 0.7,
            min_cluster: 2,
            max_cluster: 5,
            n_planted: 20,
            dim: 300,
            seed: 42,
        }
    }
}

/// A report not in the corpus whose true duplicates are `cluster`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedQuery {
    pub bug: BugReport,
    pub cluster: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub vectors: WordVectorStore,
    pub planted: Vec<PlantedQuery>,
    pub n_templates: usize,
}

struct Cell {
    product: &'static str,
    component: &'static str,
    objects: [&'static str; 12],
    context: [&'static str; 2],
}

const CELLS: [Cell; 5] = [
    Cell {
        product: "Browser",
        component: "Networking",
        objects: [
            "proxy settings", "download manager", "https connection", "websocket client",
            "dns resolver", "tab loader", "cache layer", "cookie store", "certificate check",
            "http2 stream", "prefetch service", "offline mode",
        ],
        context: ["The network panel shows requests stalling.", "Request logs show repeated timeouts."],
    },
    Cell {
        product: "Browser",
        component: "Rendering",
        objects: [
            "font renderer", "svg image", "canvas element", "video player", "css grid",
            "scroll bar", "print preview", "dark theme", "zoom control", "pdf viewer",
            "animation timer", "emoji picker",
        ],
        context: ["The page layout flickers before this.", "The compositor log shows dropped frames."],
    },
    Cell {
        product: "Mail",
        component: "Sync",
        objects: [
            "calendar feed", "contact list", "imap folder", "attachment upload", "search index",
            "draft folder", "signature editor", "spam filter", "address book", "oauth token",
            "inbox badge", "mail rules",
        ],
        context: ["Sync status stays at pending.", "The account panel shows sync in progress forever."],
    },
    Cell {
        product: "Router",
        component: "Firmware",
        objects: [
            "wifi radio", "vpn tunnel", "dhcp server", "port forwarding", "usb modem",
            "mesh node", "guest network", "led indicator", "admin console", "ssh daemon",
            "firewall table", "dns relay",
        ],
        context: ["The system log fills with watchdog messages.", "Kernel messages mention a watchdog reset."],
    },
    Cell {
        product: "Storage",
        component: "Backup",
        objects: [
            "snapshot job", "restore wizard", "encryption key", "cloud bucket", "retention policy",
            "disk quota", "dedupe engine", "scheduler service", "archive export", "checksum verify",
            "mount point", "sync agent",
        ],
        context: ["The job history marks the run as partial.", "Job history lists the run as incomplete."],
    },
];

const TRIGGERS: [&str; 8] = [
    "after upgrading to the latest build",
    "when resuming from sleep",
    "while importing a large file",
    "after changing the display language",
    "on first launch after install",
    "when the network drops",
    "after restoring default settings",
    "while running in safe mode",
];

const SYMPTOMS: [&str; 8] = [
    "crashes",
    "hangs",
    "shows a blank screen",
    "returns an error",
    "leaks memory",
    "uses full cpu",
    "loses data",
    "logs out the user",
];

struct Structure {
    headlines: [&'static str; 2],
    sentences: [&'static str; 3],
}

const STRUCTURES: [Structure; 8] = [
    Structure {
        headlines: ["{obj} {sym} {trig}", "{Trig}, the {obj} {sym}"],
        sentences: [
            "The {obj} {sym} {trig}.",
            "It started recently and happens every time.",
            "Expected the {obj} to keep working normally.",
        ],
    },
    Structure {
        headlines: ["Regression: {obj} {sym}", "{obj} regression, it {sym}"],
        sentences: [
            "Since the last release the {obj} {sym} {trig}.",
            "Rolling back the update makes the problem go away.",
            "Looks like a regression in the {obj} code.",
        ],
    },
    Structure {
        headlines: ["Intermittent failure in {obj}: {sym}", "{obj} sometimes {sym}"],
        sentences: [
            "Roughly one in five attempts the {obj} {sym}.",
            "It only happens {trig}.",
            "Hard to reproduce on demand.",
        ],
    },
    Structure {
        headlines: ["{obj} {sym} for users with many items", "{obj} {sym} with large accounts"],
        sentences: [
            "Users with a lot of items report that the {obj} {sym}.",
            "Small accounts are not affected.",
            "Seems to scale badly {trig}.",
        ],
    },
    Structure {
        headlines: ["Cannot configure {obj}, it {sym}", "{obj} settings do not apply and it {sym}"],
        sentences: [
            "Changing options for the {obj} has no effect {trig}.",
            "After saving, the {obj} {sym}.",
            "The settings dialog reports success anyway.",
        ],
    },
    Structure {
        headlines: ["{obj} {sym} on startup", "Startup problem: {obj} {sym}"],
        sentences: [
            "Right at startup the {obj} {sym}.",
            "This began {trig}.",
            "Restarting twice usually clears it.",
        ],
    },
    Structure {
        headlines: ["Security warning from {obj}, then it {sym}", "{obj} shows a bogus security warning and {sym}"],
        sentences: [
            "The {obj} raises a security warning and then {sym}.",
            "We see this {trig}.",
            "Other clients on the same network are fine.",
        ],
    },
    Structure {
        headlines: ["{obj} is slow and then {sym}", "Performance: {obj} degrades until it {sym}"],
        sentences: [
            "The {obj} gets slower over an hour and finally {sym}.",
            "Memory grows steadily {trig}.",
            "Profiling points at the {obj} module.",
        ],
    },
];

const FILLERS: [&str; 8] = [
    "Please advise.",
    "This is blocking our release.",
    "Happens on every machine we tried.",
    "No workaround found so far.",
    "Reproduced by two people on the team.",
    "Screenshot attached.",
    "Worked fine in the previous version.",
    "Priority is high for us.",
];

/// Words a paraphrase may swap for one of the listed alternatives.
const SWAPS: [(&str, &[&str]); 24] = [
    ("crashes", &["fails", "dies", "aborts"]),
    ("hangs", &["freezes", "stalls"]),
    ("blank", &["empty", "white"]),
    ("error", &["failure", "fault"]),
    ("memory", &["ram"]),
    ("cpu", &["processor"]),
    ("data", &["content", "records"]),
    ("upgrading", &["updating"]),
    ("launch", &["start", "startup"]),
    ("drops", &["disconnects"]),
    ("restoring", &["resetting"]),
    ("large", &["big", "huge"]),
    ("expected", &["assumed"]),
    ("working", &["functioning", "running"]),
    ("shows", &["displays"]),
    ("returns", &["throws", "gives"]),
    ("loses", &["discards"]),
    ("slow", &["sluggish"]),
    ("recently", &["lately"]),
    ("problem", &["issue", "bug"]),
    ("report", &["say", "claim"]),
    ("release", &["version"]),
    ("attempts", &["tries"]),
    ("finally", &["eventually"]),
];

#[derive(Clone, Copy)]
struct Issue {
    cell: usize,
    structure: usize,
    object: usize,
    trigger: usize,
    symptom: usize,
}

fn fill(pattern: &str, issue: &Issue) -> String {
    let trig = TRIGGERS[issue.trigger];
    let mut cap = trig.to_owned();
    cap[..1].make_ascii_uppercase();
    pattern
        .replace("{obj}", CELLS[issue.cell].objects[issue.object])
        .replace("{sym}", SYMPTOMS[issue.symptom])
        .replace("{Trig}", &cap)
        .replace("{trig}", trig)
}

fn swap_words(text: &str, rate: f64, rng: &mut ChaCha8Rng) -> String {
    let table: HashMap<&str, &[&str]> = SWAPS.iter().copied().collect();
    text.split(' ')
        .map(|w| {
            let core = w.trim_end_matches(['.', ',', ':']);
            let tail = &w[core.len()..];
            match table.get(core.to_ascii_lowercase().as_str()) {
                Some(alts) if rng.random_bool(rate) => format!("{}{tail}", alts.choose(rng).unwrap()),
                _ => w.to_owned(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn noise_sentence(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..5) {
        0 => format!(
            "Seen on host {}.{}.{}.{}.",
            rng.random_range(10..200),
            rng.random_range(0..255),
            rng.random_range(0..255),
            rng.random_range(1..255)
        ),
        1 => format!("Log file at /var/log/app/{}.log.", rng.random_range(100..999)),
        2 => format!(
            "Client mac {:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}.",
            rng.random::<u8>(),
            rng.random::<u8>(),
            rng.random::<u8>(),
            rng.random::<u8>(),
            rng.random::<u8>(),
            rng.random::<u8>()
        ),
        3 => format!("Trace saved to C:\\logs\\trace{}.txt.", rng.random_range(1..99)),
        _ => format!("Gateway fe80::{:x}:{:x} answers pings.", rng.random::<u16>(), rng.random::<u16>()),
    }
}

/// Renders one report for `issue`. `paraphrase` switches on the rewriting used
/// for duplicates.
fn render(issue: &Issue, paraphrase: bool, rng: &mut ChaCha8Rng) -> (String, String) {
    let s = &STRUCTURES[issue.structure];
    let cell = &CELLS[issue.cell];
    let variant = if paraphrase { rng.random_range(0..2) } else { 0 };
    let mut headline = fill(s.headlines[variant], issue);
    headline[..1].make_ascii_uppercase();

    let mut sentences: Vec<String> = s.sentences.iter().map(|p| fill(p, issue)).collect();
    sentences.push(cell.context[if paraphrase { rng.random_range(0..2) } else { 0 }].to_owned());
    if paraphrase {
        headline = swap_words(&headline, 0.5, rng);
        sentences = sentences.iter().map(|t| swap_words(t, 0.5, rng)).collect();
        if rng.random_bool(0.3) {
            // never drop the first sentence, it carries the symptom
            let i = rng.random_range(1..sentences.len());
            sentences.remove(i);
        }
        if rng.random_bool(0.3) {
            let n = sentences.len();
            sentences[1..n].shuffle(rng);
        }
    }
    if rng.random_bool(0.5) {
        sentences.push(FILLERS.choose(rng).unwrap().to_string());
    }
    if rng.random_bool(0.5) {
        let at = rng.random_range(1..=sentences.len());
        sentences.insert(at, noise_sentence(rng));
    }
    (headline, sentences.join(" "))
}

fn severity(rng: &mut ChaCha8Rng) -> Severity {
    [Severity::High, Severity::Medium, Severity::Low, Severity::VeryLow]
        .choose(rng)
        .copied()
        .unwrap()
}

pub fn n_templates() -> usize {
    CELLS.len() * STRUCTURES.len()
}

/// Builds the corpus, vectors and planted queries. Same config, same output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.min_cluster < 2 || cfg.max_cluster < cfg.min_cluster {
        return Err(Error::Precondition("cluster sizes must satisfy 2 <= min <= max".into()));
    }
    if !(0.0..=1.0).contains(&cfg.duplicate_share) || cfg.dim == 0 {
        return Err(Error::Precondition("duplicate_share must be in [0, 1] and dim positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // cluster sizes until the duplicate budget is used up
    let dup_budget = (cfg.duplicate_share * cfg.n_bugs as f64).round() as usize;
    let mut sizes = Vec::new();
    let mut used = 0;
    while used < dup_budget {
        let s = rng.random_range(cfg.min_cluster..=cfg.max_cluster).min(dup_budget - used);
        if s < 2 {
            break;
        }
        sizes.push(s);
        used += s;
    }
    let n_issues = sizes.len() + (cfg.n_bugs - used);
    // distinct issues differ in what fails or how; the trigger alone does not
    // make a separate bug
    let n_combos = CELLS.len() * STRUCTURES.len() * 12 * SYMPTOMS.len();
    if n_issues > n_combos {
        return Err(Error::Precondition(format!("{n_issues} distinct issues requested, {n_combos} possible")));
    }

    // distinct base issues, templates used round-robin so every template appears
    let mut issues = Vec::with_capacity(n_issues);
    let mut taken = BTreeSet::new();
    let mut t = 0usize;
    while issues.len() < n_issues {
        let template = t % n_templates();
        t += 1;
        loop {
            let issue = Issue {
                cell: template / STRUCTURES.len(),
                structure: template % STRUCTURES.len(),
                object: rng.random_range(0..12),
                trigger: rng.random_range(0..TRIGGERS.len()),
                symptom: rng.random_range(0..SYMPTOMS.len()),
            };
            if taken.insert((issue.cell, issue.structure, issue.object, issue.symptom)) {
                issues.push(issue);
                break;
            }
        }
    }
    issues.shuffle(&mut rng);

    // one entry per bug: (issue index, member number within its cluster)
    let mut members: Vec<(usize, usize)> = Vec::with_capacity(cfg.n_bugs);
    for (i, _) in issues.iter().enumerate() {
        let size = sizes.get(i).copied().unwrap_or(1);
        members.extend((0..size).map(|m| (i, m)));
    }
    members.shuffle(&mut rng);

    let start: DateTime<Utc> = DateTime::from_timestamp(1_600_000_000, 0).unwrap();
    let mut first_of: HashMap<usize, String> = HashMap::new();
    let mut cluster_ids: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    let mut bugs = Vec::with_capacity(cfg.n_bugs);
    for (n, &(i, _)) in members.iter().enumerate() {
        let issue = &issues[i];
        let id = format!("SYN-{:05}", n + 1);
        let original = first_of.get(&i).cloned();
        let (headline, description) = render(issue, original.is_some(), &mut rng);
        let cell = &CELLS[issue.cell];
        let mut bug = BugReport::new(&id, headline, description, cell.product, cell.component);
        bug.project = "synthetic".into();
        bug.version = format!("{}.{}", rng.random_range(1..4), rng.random_range(0..10));
        bug.hardware = ["x86_64", "arm64"].choose(&mut rng).unwrap().to_string();
        bug.severity = severity(&mut rng);
        bug.created_at = start + Duration::minutes(37 * n as i64);
        if let Some(orig) = original {
            bug.status = Status::Duplicate;
            bug.duplicate_of = Some(orig);
        } else {
            first_of.insert(i, id.clone());
        }
        if sizes.get(i).is_some() {
            cluster_ids.entry(i).or_default().insert(id);
        }
        bugs.push(bug);
    }
    let corpus = Corpus::new(bugs)?;

    let mut planted = Vec::new();
    let clustered: Vec<usize> = cluster_ids.keys().copied().collect();
    for (k, &i) in clustered.iter().take(cfg.n_planted).enumerate() {
        let (headline, description) = render(&issues[i], true, &mut rng);
        let cell = &CELLS[issues[i].cell];
        let mut bug = BugReport::new(format!("NEW-{:03}", k + 1), headline, description, cell.product, cell.component);
        bug.created_at = start + Duration::minutes(37 * (cfg.n_bugs + k) as i64);
        planted.push(PlantedQuery {
            bug,
            cluster: cluster_ids[&i].clone(),
        });
    }

    let vectors = build_vectors(&corpus, &planted, cfg.dim, &mut rng)?;
    Ok(SynthCorpus {
        corpus,
        vectors,
        planted,
        n_templates: n_templates(),
    })
}

/// Random vectors for every normalized token, with swap alternatives placed
/// close to the word they replace.
fn build_vectors(
    corpus: &Corpus,
    planted: &[PlantedQuery],
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<WordVectorStore> {
    let cfg = CleanConfig::default();
    let canon = |w: &str| -> Option<String> {
        split_tokens(&w.to_lowercase()).first().and_then(|t| canonical_token(t, &cfg))
    };
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    let texts = corpus.iter().chain(planted.iter().map(|p| &p.bug)).map(BugReport::text);
    for text in texts {
        vocab.extend(crate::preprocess::normalize(&text, &cfg).tokens);
    }

    let gauss = |rng: &mut ChaCha8Rng, scale: f64| -> Vec<f64> {
        // uniform with unit variance
        (0..dim).map(|_| rng.random_range(-1.0..1.0) * 3f64.sqrt() * scale).collect()
    };
    let scale = 1.0 / (dim as f64).sqrt();
    let mut base: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (word, alts) in SWAPS {
        let Some(head) = canon(word) else { continue };
        let centre = base.entry(head.clone()).or_insert_with(|| gauss(rng, scale)).clone();
        for alt in alts {
            if let Some(t) = canon(alt) {
                if t != head && !base.contains_key(&t) {
                    let jitter = gauss(rng, 0.15 * scale);
                    base.insert(t.clone(), centre.iter().zip(jitter).map(|(c, j)| c + j).collect());
                }
                vocab.insert(t);
            }
        }
        vocab.insert(head);
    }

    let mut store = WordVectorStore::new(dim);
    for word in vocab {
        let v = match base.get(&word) {
            Some(v) => v.clone(),
            None => gauss(rng, scale),
        };
        store.insert(word, v.into_iter().map(|x| x as f32).collect())?;
    }
    Ok(store)
}

/// Writes the store in the text vector format, words sorted.
pub fn write_vec(store: &WordVectorStore, path: &std::path::Path) -> Result<()> {
    use crate::embedding::EmbeddingBackend;
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut words: Vec<&str> = store.words().collect();
    words.sort_unstable();
    let io = |e| Error::io(path, e);
    writeln!(out, "{} {}", words.len(), store.dim()).map_err(io)?;
    for w in words {
        write!(out, "{w}").map_err(io)?;
        for x in store.vector(w).expect("word from the store") {
            write!(out, " {x}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{duplicate_clusters, filter_invalid};

    fn small() -> SynthConfig {
        SynthConfig {
            n_bugs: 300,
            dim: 16,
            n_planted: 5,
            ..Default::default()
        }
    }

    #[test]
    fn shape() {
        let s = generate(&small()).unwrap();
        assert_eq!(s.corpus.len(), 300);
        assert_eq!(filter_invalid(&s.corpus).len(), 300);
        let cl = duplicate_clusters(&s.corpus);
        assert!(cl.len() > 30);
        let clustered: usize = cl.clusters().iter().map(|c| c.len()).sum();
        assert_eq!(clustered, 210);
        assert_eq!(s.planted.len(), 5);
        for p in &s.planted {
            assert!(p.cluster.iter().all(|id| s.corpus.contains(id)));
        }
        assert_eq!(s.n_templates, 40);
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn duplicates_link_to_earlier_reports() {
        let s = generate(&small()).unwrap();
        for bug in &s.corpus {
            if let Some(t) = &bug.duplicate_of {
                assert!(s.corpus.position(t).unwrap() < s.corpus.position(&bug.id).unwrap());
                assert!(bug.validate().is_ok());
            }
        }
    }
}
