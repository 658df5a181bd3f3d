//! Synthetic film/book domain with gold questions, for offline end-to-end runs.
//!
//! Gold questions are rendered by the verbalizer with user-side phrasing for
//! some relations (for example `film.directed_by` becomes "director" or
//! "made by") and random word dropout, so they differ from the canonically
//! phrased synthetic questions the pipeline produces.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{write_jsonl, DataError, DataPair, Source};
use crate::egst::answer_surface;
use crate::ir::QaPair;
use crate::kb::{KbBuilder, KnowledgeBase, Literal, Term, Triple, TYPE_PREDICATE};
use crate::model::{enumerate_candidates, link_entities, DEFAULT_CAP};
use crate::query::{Answers, Program};
use crate::sampler::{derived_seed, load_templates, sample_corpus, SampleConfig};
use crate::verbalize::{join_pieces, Piece, Verbalizer};

pub const KB_FILE: &str = "kb.tsv";
pub const TEMPLATES_FILE: &str = "templates.txt";
pub const SEEDS_FILE: &str = "seeds.jsonl";
pub const DEV_FILE: &str = "dev.jsonl";
pub const UNLABELED_FILE: &str = "unlabeled.txt";
pub const UNLABELED_GOLD_FILE: &str = "unlabeled_gold.jsonl";
pub const FALLBACK_FILE: &str = "fallback.jsonl";
pub const IR_STUB_FILE: &str = "ir_stub.jsonl";
pub const IR_DEMOS_FILE: &str = "ir_demos.jsonl";

pub const TEMPLATES: &str = "\
(JOIN (R ?rel0) ?ent0)
(JOIN ?rel0 ?ent0)
(COUNT (JOIN ?rel0 ?ent0))
(AND ?ent1 (JOIN ?rel0 ?ent0))
(ARGMAX (JOIN ?rel0 ?ent0) ?rel1)
(ARGMIN (JOIN ?rel0 ?ent0) ?rel1)
(JOIN (R ?rel1) (JOIN (R ?rel0) ?ent0))
";

const CLASSES: [&str; 5] = ["media.film", "people.person", "media.genre", "location.city", "media.book"];

#[derive(Clone, Copy)]
enum Range {
    Class(usize),
    Int(i64, i64),
}

/// (id, domain class, range, user phrasings)
const RELATIONS: [(&str, usize, Range, &[&str]); 12] = [
    ("film.directed_by", 0, Range::Class(1), &["director", "directing", "made by"]),
    ("film.produced_by", 0, Range::Class(1), &["producer", "production", "funded by"]),
    ("film.written_by", 0, Range::Class(1), &["writer", "writing", "penned by"]),
    ("film.genre", 0, Range::Class(2), &[]),
    ("film.runtime", 0, Range::Int(80, 180), &[]),
    ("film.release_year", 0, Range::Int(1950, 2020), &["premiere year", "debut year"]),
    ("person.born_in", 1, Range::Class(3), &["raised in", "native to"]),
    ("person.birth_year", 1, Range::Int(1920, 1995), &[]),
    ("book.author", 4, Range::Class(1), &[]),
    ("book.genre", 4, Range::Class(2), &[]),
    ("book.pages", 4, Range::Int(90, 900), &[]),
    ("city.population", 3, Range::Int(5_000, 900_000), &[]),
];

const FIRST: [&str; 30] = [
    "Ada", "Bruno", "Clara", "Dmitri", "Elena", "Felix", "Greta", "Hugo", "Ines", "Jonas", "Kira", "Leon", "Mara",
    "Nico", "Olga", "Pavel", "Quinn", "Rosa", "Soren", "Tilda", "Ulric", "Vera", "Wendel", "Xenia", "Yannick", "Zora",
    "Alma", "Boris", "Cyra", "Dario",
];
const LAST: [&str; 30] = [
    "Abbott", "Brandt", "Castell", "Dorn", "Eller", "Falk", "Gerber", "Holm", "Ivers", "Jansen", "Kessler", "Lund",
    "Moreau", "Novak", "Orsini", "Pratt", "Quist", "Rhee", "Sauer", "Thorne", "Ueda", "Varga", "Wolfe", "Xiong",
    "Yates", "Zeller", "Ambrose", "Becker", "Crane", "Drake",
];
const ADJ: [&str; 30] = [
    "Silent", "Crimson", "Hollow", "Golden", "Broken", "Frozen", "Hidden", "Burning", "Distant", "Electric", "Fallen",
    "Gentle", "Lonely", "Midnight", "Northern", "Painted", "Quiet", "Restless", "Scarlet", "Shattered", "Sunken",
    "Twisted", "Velvet", "Wandering", "Wicked", "Wild", "Iron", "Lost", "Pale", "Savage",
];
const NOUN: [&str; 30] = [
    "River", "Harbor", "Empire", "Garden", "Mirror", "Orchard", "Signal", "Voyage", "Lantern", "Canyon", "Comet",
    "Dynasty", "Echo", "Frontier", "Glacier", "Horizon", "Island", "Jungle", "Kingdom", "Labyrinth", "Meadow", "Nebula",
    "Oasis", "Prairie", "Quarry", "Reef", "Summit", "Tempest", "Tundra", "Valley",
];
const BOOK_HEAD: [&str; 20] = [
    "Letters", "Songs", "Tales", "Maps", "Notes", "Ballads", "Chronicles", "Diaries", "Fables", "Poems", "Legends",
    "Sketches", "Essays", "Riddles", "Hymns", "Sagas", "Verses", "Accounts", "Memoirs", "Studies",
];
const BOOK_TAIL: [&str; 20] = [
    "Ash", "Salt", "Stone", "Smoke", "Rain", "Dust", "Frost", "Amber", "Thunder", "Marble", "Copper", "Silk", "Cedar",
    "Coral", "Ivory", "Linen", "Moss", "Pearl", "Slate", "Willow",
];
const GENRES: [&str; 12] = [
    "Drama", "Comedy", "Thriller", "Western", "Musical", "Satire", "Mystery", "Romance", "Horror", "Fantasy", "Noir",
    "Documentary",
];
const CITIES: [&str; 30] = [
    "Arden", "Belmora", "Calder", "Dunmore", "Eastwick", "Fairhaven", "Glenrock", "Halston", "Ivybridge", "Juniper Bay",
    "Kestrel Point", "Lowmarsh", "Marrow", "Northgate", "Oakhurst", "Pinecrest", "Queensferry", "Redwater", "Stonehill",
    "Thornbury", "Umberlee", "Valemont", "Westmoor", "Yarrow", "Zephyr Cove", "Ashby", "Brightwater", "Coldspring",
    "Dovecote", "Elmstead",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub entities: usize,
    pub relations: usize,
    pub classes: usize,
    pub rng_seed: u64,
    /// Per-word dropout probability for non-mention words of gold questions.
    pub noise: f64,
    pub dev_questions: usize,
    pub unlabeled_questions: usize,
    pub seed_pairs: usize,
    pub fallback_questions: usize,
    /// Probability that a stub direct answer names the gold answers.
    pub ir_accuracy: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            entities: 1000,
            relations: 12,
            classes: 5,
            rng_seed: 7,
            noise: 0.1,
            dev_questions: 200,
            unlabeled_questions: 400,
            seed_pairs: 25,
            fallback_questions: 20,
            ir_accuracy: 0.85,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub kb: KnowledgeBase,
    pub templates: String,
    pub seeds: Vec<DataPair>,
    pub dev: Vec<DataPair>,
    pub unlabeled: Vec<DataPair>,
    /// Questions that mention no KB entity.
    pub fallback: Vec<DataPair>,
    pub ir_stub: Vec<QaPair>,
    pub ir_demos: Vec<QaPair>,
}

impl Fixture {
    pub fn unlabeled_questions(&self) -> Vec<String> {
        self.unlabeled.iter().map(|p| p.question.clone()).collect()
    }

    pub fn oracle(&self) -> HashMap<String, String> {
        self.unlabeled.iter().map(|p| (p.question.clone(), p.program_text.clone())).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<(), DataError> {
        let io = |path: &Path| {
            let path = path.to_owned();
            move |source| DataError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let kb_path = dir.join(KB_FILE);
        fs::write(&kb_path, self.kb.to_text()).map_err(io(&kb_path))?;
        let t_path = dir.join(TEMPLATES_FILE);
        fs::write(&t_path, &self.templates).map_err(io(&t_path))?;
        let u_path = dir.join(UNLABELED_FILE);
        let lines: String = self.unlabeled.iter().map(|p| format!("{}\n", p.question)).collect();
        fs::write(&u_path, lines).map_err(io(&u_path))?;
        write_jsonl(dir.join(SEEDS_FILE), &self.seeds)?;
        write_jsonl(dir.join(DEV_FILE), &self.dev)?;
        write_jsonl(dir.join(UNLABELED_GOLD_FILE), &self.unlabeled)?;
        write_jsonl(dir.join(FALLBACK_FILE), &self.fallback)?;
        write_jsonl(dir.join(IR_STUB_FILE), &self.ir_stub)?;
        write_jsonl(dir.join(IR_DEMOS_FILE), &self.ir_demos)
    }
}

fn entity_id(i: usize) -> String {
    format!("m.0{i:05x}")
}

fn names(rng: &mut ChaCha8Rng, class: usize, count: usize) -> Vec<String> {
    let mut pool: Vec<String> = match class {
        0 => ADJ.iter().flat_map(|a| NOUN.iter().map(move |n| format!("{a} {n}"))).collect(),
        1 => FIRST.iter().flat_map(|a| LAST.iter().map(move |n| format!("{a} {n}"))).collect(),
        2 => GENRES.iter().map(|s| (*s).to_owned()).collect(),
        3 => CITIES.iter().map(|s| (*s).to_owned()).collect(),
        _ => BOOK_HEAD.iter().flat_map(|a| BOOK_TAIL.iter().map(move |n| format!("{a} of {n}"))).collect(),
    };
    pool.shuffle(rng);
    pool.truncate(count);
    pool
}

fn build_kb(spec: &FixtureSpec, rng: &mut ChaCha8Rng) -> KnowledgeBase {
    let n_classes = spec.classes.clamp(1, CLASSES.len());
    let weights = [0.40, 0.30, 0.07, 0.08, 0.15];
    let total: f64 = weights[..n_classes].iter().sum();
    let caps = [ADJ.len() * NOUN.len(), FIRST.len() * LAST.len(), GENRES.len(), CITIES.len(), BOOK_HEAD.len() * BOOK_TAIL.len()];
    let counts: Vec<usize> = (0..n_classes)
        .map(|c| ((spec.entities as f64 * weights[c] / total).round() as usize).clamp(2, caps[c]))
        .collect();

    let mut b = KbBuilder::new();
    let mut members: Vec<Vec<String>> = Vec::new();
    let mut next = 0;
    for (c, &n) in counts.iter().enumerate() {
        let mut ids = Vec::new();
        for name in names(rng, c, n) {
            let id = entity_id(next);
            next += 1;
            b.triple(Triple::new(&id, TYPE_PREDICATE, Term::class(CLASSES[c])));
            b.name(&id, name);
            ids.push(id);
        }
        members.push(ids);
    }

    let relations: Vec<_> = RELATIONS
        .iter()
        .filter(|(_, d, r, _)| *d < n_classes && !matches!(r, Range::Class(c) if *c >= n_classes))
        .take(spec.relations)
        .collect();
    for (c, ids) in members.iter().enumerate() {
        for id in ids {
            let mut used_people: Vec<String> = Vec::new();
            for (rel, _, range, _) in relations.iter().filter(|(_, d, _, _)| *d == c) {
                match range {
                    Range::Int(lo, hi) => {
                        b.triple(Triple::new(id, *rel, Term::Literal(Literal::integer(rng.gen_range(*lo..=*hi)))));
                    }
                    Range::Class(target) => {
                        let many = rel.ends_with("genre") && rng.gen_bool(0.3);
                        for _ in 0..if many { 2 } else { 1 } {
                            let pool = &members[*target];
                            let mut pick = pool.choose(rng).unwrap().clone();
                            // people credited on one film are distinct where possible
                            for _ in 0..4 {
                                if !used_people.contains(&pick) {
                                    break;
                                }
                                pick = pool.choose(rng).unwrap().clone();
                            }
                            if *target == 1 {
                                used_people.push(pick.clone());
                            }
                            b.triple(Triple::new(id, *rel, Term::entity(pick)));
                        }
                    }
                }
            }
        }
    }
    b.freeze()
}

const PHRASE_SETS: usize = 3;

/// The `k`-th phrasing of every relation that has any, cycling short lists.
fn phrases(k: usize) -> HashMap<String, String> {
    RELATIONS
        .iter()
        .filter(|(_, _, _, p)| !p.is_empty())
        .map(|(r, _, _, p)| ((*r).to_owned(), p[k % p.len()].to_owned()))
        .collect()
}

fn drop_words(pieces: &[Piece], noise: f64, rng: &mut ChaCha8Rng) -> Vec<Piece> {
    pieces
        .iter()
        .map(|p| match p {
            Piece::Text(t) => {
                Piece::Text(t.split(' ').filter(|_| !(noise > 0.0 && rng.gen_bool(noise))).collect::<Vec<_>>().join(" "))
            }
            m => m.clone(),
        })
        .collect()
}

fn surfaces(pair: &DataPair, kb: &KnowledgeBase) -> Vec<String> {
    pair.answers.iter().filter_map(|a| answer_surface(a, kb)).collect()
}

fn stub_response(pair: &DataPair, kb: &KnowledgeBase, accuracy: f64, rng: &mut ChaCha8Rng, decoys: &[&str]) -> String {
    let correct = rng.gen_bool(accuracy);
    let names = surfaces(pair, kb);
    if correct && !names.is_empty() {
        let shown: Vec<&str> = names.iter().take(5).map(String::as_str).collect();
        if pair.program_text.starts_with("(COUNT") {
            return format!("There are {}.", shown[0]);
        }
        return format!("I believe it is {}.", shown.join(" and "));
    }
    if pair.answers.iter().all(|a| a.starts_with('"')) {
        return format!("Probably {}.", rng.gen_range(1..3000));
    }
    format!("Perhaps {}.", decoys.choose(rng).unwrap())
}

pub fn gen_fixture(spec: &FixtureSpec) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let kb = build_kb(spec, &mut rng);
    let templates = load_templates(TEMPLATES).expect("built-in templates parse");
    let wanted = spec.dev_questions + spec.unlabeled_questions + spec.seed_pairs + spec.fallback_questions;
    let config = SampleConfig {
        max_programs: wanted * 4,
        per_step_fanout: 64,
        rng_seed: derived_seed(spec.rng_seed, 1),
        ..SampleConfig::default()
    };
    let mut programs = sample_corpus(&templates, &kb, &config).unwrap_or_default();
    programs.shuffle(&mut rng);

    let verbalizers: Vec<Verbalizer<'_>> =
        (0..PHRASE_SETS).map(|k| Verbalizer::new(&kb).with_phrases(phrases(k))).collect();
    let mut seen_questions = HashSet::new();
    let mut linked_pairs = Vec::new();
    let mut fallback = Vec::new();
    for program in programs {
        let Ok(answers) = program.execute(&kb) else { continue };
        if answers.is_empty() {
            continue;
        }
        let pieces = verbalizers.choose(&mut rng).unwrap().pieces(&program);
        if fallback.len() < spec.fallback_questions && entity_answers(&answers) {
            let vague: Vec<Piece> =
                pieces.iter().map(|p| if let Piece::Mention(_) = p { Piece::Text("that one".into()) } else { p.clone() }).collect();
            let question = join_pieces(&drop_words(&vague, spec.noise, &mut rng));
            if link_entities(&question, &kb).linked.is_empty() && seen_questions.insert(question.clone()) {
                fallback.push(DataPair::new(question, &program, &answers, Source::Seed));
                continue;
            }
        }
        if linked_pairs.len() >= spec.dev_questions + spec.unlabeled_questions + spec.seed_pairs {
            if fallback.len() >= spec.fallback_questions {
                break;
            }
            continue;
        }
        let question = join_pieces(&drop_words(&pieces, spec.noise, &mut rng));
        if !reachable(&question, &program, &kb) || !seen_questions.insert(question.clone()) {
            continue;
        }
        linked_pairs.push(DataPair::new(question, &program, &answers, Source::Seed));
    }

    let seeds: Vec<DataPair> = linked_pairs.drain(..spec.seed_pairs.min(linked_pairs.len())).collect();
    let dev: Vec<DataPair> = linked_pairs.drain(..spec.dev_questions.min(linked_pairs.len())).collect();
    let unlabeled: Vec<DataPair> = linked_pairs
        .into_iter()
        .map(|mut p| {
            p.source = Source::Pseudo;
            p
        })
        .collect();

    let decoy_names: Vec<&str> = kb.triples().iter().filter_map(|t| kb.surface_name(&t.subject)).collect::<Vec<_>>();
    let mut decoys: Vec<&str> = decoy_names.clone();
    decoys.dedup();
    let mut ir_stub = Vec::new();
    for p in unlabeled.iter().chain(&dev).chain(&fallback).chain(&seeds) {
        let answer = stub_response(p, &kb, spec.ir_accuracy, &mut rng, &decoys);
        ir_stub.push(QaPair { question: p.question.clone(), answer });
    }
    let ir_demos = seeds
        .iter()
        .take(3)
        .map(|p| QaPair { question: p.question.clone(), answer: surfaces(p, &kb).join(", ") })
        .collect();
    Fixture { kb, templates: TEMPLATES.to_owned(), seeds, dev, unlabeled, fallback, ir_stub, ir_demos }
}

fn entity_answers(answers: &Answers) -> bool {
    matches!(answers, Answers::Set(v) if v.iter().all(|x| x.as_entity().is_some()))
}

/// The gold program is among the question's enumerated candidates.
fn reachable(question: &str, program: &Program, kb: &KnowledgeBase) -> bool {
    let q = link_entities(question, kb);
    enumerate_candidates(&q, kb, DEFAULT_CAP).is_ok_and(|set| set.position(program.canonical()).is_some())
}

/// Triple counts per predicate, for summaries.
pub fn predicate_histogram(kb: &KnowledgeBase) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in kb.triples() {
        *out.entry(t.predicate.clone()).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FixtureSpec {
        FixtureSpec {
            entities: 200,
            dev_questions: 20,
            unlabeled_questions: 20,
            seed_pairs: 5,
            fallback_questions: 5,
            ..FixtureSpec::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = gen_fixture(&small());
        let b = gen_fixture(&small());
        assert_eq!(a.kb.to_text(), b.kb.to_text());
        assert_eq!(a.dev, b.dev);
        assert_eq!(a.ir_stub, b.ir_stub);
    }

    #[test]
    fn gold_pairs_execute() {
        let f = gen_fixture(&small());
        assert_eq!(f.dev.len(), 20);
        assert_eq!(f.seeds.len(), 5);
        assert_eq!(f.fallback.len(), 5);
        for p in f.dev.iter().chain(&f.seeds).chain(&f.unlabeled).chain(&f.fallback) {
            let prog = p.program().unwrap();
            let answers = prog.execute(&f.kb).unwrap();
            assert!(!answers.is_empty(), "{}", p.program_text);
        }
        for p in &f.fallback {
            assert!(link_entities(&p.question, &f.kb).linked.is_empty(), "{}", p.question);
        }
        assert_eq!(predicate_histogram(&f.kb).len(), 13);
    }

    #[test]
    fn no_noise_matches_verbalizer() {
        let f = gen_fixture(&FixtureSpec { noise: 0.0, ..small() });
        let vs: Vec<Verbalizer<'_>> = (0..PHRASE_SETS).map(|k| Verbalizer::new(&f.kb).with_phrases(phrases(k))).collect();
        for p in &f.dev {
            let prog = p.program().unwrap();
            assert!(vs.iter().any(|v| v.question(&prog) == p.question), "{}", p.question);
        }
    }
}
