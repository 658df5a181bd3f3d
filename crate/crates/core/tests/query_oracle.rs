mod common;

use std::sync::OnceLock;

use kbqa::fixture::{gen_fixture, FixtureSpec};
use kbqa::kb::{KnowledgeBase, Literal};
use kbqa::query::sexpr::{SExpr, Superlative};
use kbqa::query::{sexpr_to_sparql, Atom, CmpOp, Lang, Program};
use kbqa::sampler::{load_templates, sample_corpus, SampleConfig};
use proptest::prelude::*;

use common::{brute_sexpr, brute_sparql, corpus};

const RELATIONS: [&str; 12] = [
    "film.directed_by",
    "film.produced_by",
    "film.written_by",
    "film.genre",
    "film.runtime",
    "film.release_year",
    "person.born_in",
    "person.birth_year",
    "book.author",
    "book.genre",
    "book.pages",
    "city.population",
];
const NUMERIC: [&str; 5] = ["film.runtime", "film.release_year", "person.birth_year", "book.pages", "city.population"];
const CLASSES: [&str; 5] = ["media.film", "people.person", "media.genre", "location.city", "media.book"];

fn small_kb() -> &'static KnowledgeBase {
    static KB: OnceLock<KnowledgeBase> = OnceLock::new();
    KB.get_or_init(|| {
        let spec = FixtureSpec { entities: 80, dev_questions: 5, unlabeled_questions: 5, seed_pairs: 2, fallback_questions: 1, ..FixtureSpec::default() };
        gen_fixture(&spec).kb
    })
}

fn fixture_kb(seed: u64) -> KnowledgeBase {
    let spec = FixtureSpec { rng_seed: seed, dev_questions: 5, unlabeled_questions: 5, seed_pairs: 2, fallback_questions: 1, ..FixtureSpec::default() };
    gen_fixture(&spec).kb
}

fn check_equivalent(p: &Program, kb: &KnowledgeBase) {
    let e = p.as_sexpr().unwrap();
    let engine = p.execute(kb);
    match brute_sexpr(e, kb) {
        Ok(expected) => {
            assert_eq!(engine.as_ref().ok(), Some(&expected), "{}", p.canonical());
            let converted = sexpr_to_sparql(p).unwrap_or_else(|err| panic!("{}: {err}", p.canonical()));
            assert_eq!(converted.execute(kb).ok(), Some(expected.clone()), "{}", converted.canonical());
            assert_eq!(brute_sparql(converted.as_sparql().unwrap(), kb).ok(), Some(expected), "{}", converted.canonical());
        }
        Err(_) => assert!(engine.is_err(), "{} should fail", p.canonical()),
    }
}

#[test]
fn corpus_reaches_canonical_fixpoint() {
    let programs = corpus();
    assert!(programs.len() >= 50);
    for text in &programs {
        let p = Program::parse_any(text).unwrap_or_else(|e| panic!("{text}: {e}"));
        let again = Program::parse(p.lang(), p.canonical()).unwrap();
        assert_eq!(again.canonical(), p.canonical());
        assert_eq!(again, p);
    }
}

#[test]
fn corpus_matches_reference_evaluators_on_three_kbs() {
    for seed in [7, 11, 23] {
        let kb = fixture_kb(seed);
        let mut nonempty = 0;
        for text in corpus() {
            let p = Program::parse_any(&text).unwrap();
            if p.lang() == Lang::Sexpr {
                check_equivalent(&p, &kb);
            } else {
                let expected = brute_sparql(p.as_sparql().unwrap(), &kb).unwrap();
                assert_eq!(p.execute(&kb).unwrap(), expected, "{text}");
            }
            nonempty += usize::from(!p.execute(&kb).unwrap().is_empty());
        }
        assert!(nonempty >= 40, "seed {seed}: only {nonempty} non-empty");
    }
}

#[test]
fn nested_superlative_has_no_sparql_form() {
    let p = Program::parse(Lang::Sexpr, "(JOIN (R film.directed_by) (ARGMAX (JOIN film.genre m.0002c0) film.runtime))").unwrap();
    assert!(matches!(sexpr_to_sparql(&p), Err(kbqa::query::ConvertError::UnsupportedConstruct(_))));
    let kb = fixture_kb(7);
    assert_eq!(p.execute(&kb).ok(), brute_sexpr(p.as_sexpr().unwrap(), &kb).ok());
}

#[test]
fn sampled_programs_match_reference() {
    let kb = fixture_kb(3);
    let templates = load_templates(kbqa::fixture::TEMPLATES).unwrap();
    let programs = sample_corpus(&templates, &kb, &SampleConfig { max_programs: 200, rng_seed: 5, ..SampleConfig::default() }).unwrap();
    assert_eq!(programs.len(), 200);
    for p in &programs {
        check_equivalent(p, &kb);
        assert!(!p.execute(&kb).unwrap().is_empty());
    }
}

fn leaf() -> impl Strategy<Value = SExpr> {
    let ids = (0usize..80).prop_map(|i| SExpr::entity(&format!("m.0{i:05x}")));
    let classes = prop::sample::select(&CLASSES[..]).prop_map(SExpr::class);
    let ops = prop::sample::select(vec![CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]);
    let compare = (ops, prop::sample::select(&NUMERIC[..]), 0i64..2_000).prop_map(|(op, r, v)| SExpr::Compare {
        op,
        relation: Atom::Const(r.to_owned()),
        value: Atom::Const(Literal::integer(v)),
    });
    prop_oneof![3 => ids, 1 => classes, 1 => compare]
}

fn expr() -> impl Strategy<Value = SExpr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            4 => (prop::sample::select(&RELATIONS[..]), any::<bool>(), inner.clone()).prop_map(|(r, rev, c)| {
                if rev { SExpr::join_rev(r, c) } else { SExpr::join(r, c) }
            }),
            2 => (inner.clone(), inner.clone()).prop_map(|(a, b)| SExpr::and(a, b)),
            1 => (inner, prop::sample::select(&RELATIONS[..]), any::<bool>()).prop_map(|(s, r, max)| SExpr::Superlative {
                kind: if max { Superlative::Max } else { Superlative::Min },
                set: Box::new(s),
                relation: Atom::Const(r.to_owned()),
            }),
        ]
    })
}

fn top() -> impl Strategy<Value = SExpr> {
    (expr(), any::<bool>()).prop_map(|(e, count)| if count { SExpr::count(e) } else { e })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_sexpr_parses_back(e in top()) {
        let p = Program::from_sexpr(e.clone());
        let again = Program::parse(Lang::Sexpr, p.canonical()).unwrap();
        prop_assert_eq!(again.canonical(), p.canonical());
    }

    #[test]
    fn engine_agrees_with_reference(e in top()) {
        let kb = small_kb();
        let p = Program::from_sexpr(e.clone());
        let engine = p.execute(kb);
        match brute_sexpr(&e, kb) {
            Ok(expected) => {
                prop_assert_eq!(engine.as_ref().ok(), Some(&expected));
                // nested COUNT and superlatives below a join have no SPARQL form
                if let Ok(q) = sexpr_to_sparql(&p) {
                    let via_sparql = q.execute(kb);
                    let reference = brute_sparql(q.as_sparql().unwrap(), kb);
                    prop_assert_eq!(via_sparql.as_ref().ok(), reference.as_ref().ok());
                    prop_assert_eq!(via_sparql.ok(), Some(expected));
                    let reparsed = Program::parse(Lang::Sparql, q.canonical()).unwrap();
                    prop_assert_eq!(reparsed.canonical(), q.canonical());
                }
            }
            Err(_) => prop_assert!(engine.is_err()),
        }
    }
}
