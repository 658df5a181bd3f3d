//! Program-to-question translation with few-shot prompts.

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{DataPair, Source};
use crate::kb::KnowledgeBase;
use crate::llm::{Completion, ProviderError};
use crate::query::{Lang, Program};
use crate::sampler::extract_template;
use crate::verbalize::Verbalizer;

pub const SEXPR_INSTRUCTION: &str = "Convert the s-expressions to natural language questions.";
pub const SPARQL_INSTRUCTION: &str = "Convert the sparqls to natural language questions.";

#[derive(Debug, Clone, PartialEq)]
pub struct SeedPair {
    pub program: Program,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub instruction: String,
    pub seeds: Vec<SeedPair>,
    pub target: Program,
}

impl PromptSpec {
    /// A spec with the default instruction for the target's language.
    pub fn new(seeds: Vec<SeedPair>, target: Program) -> PromptSpec {
        let instruction = match target.lang() {
            Lang::Sexpr => SEXPR_INSTRUCTION,
            Lang::Sparql => SPARQL_INSTRUCTION,
        };
        PromptSpec { instruction: instruction.to_owned(), seeds, target }
    }
}

fn marker(lang: Lang) -> &'static str {
    match lang {
        Lang::Sexpr => "# s-expression:",
        Lang::Sparql => "# sparql:",
    }
}

pub fn render_prompt(spec: &PromptSpec) -> String {
    let mut out = format!("### {}\n\n", spec.instruction);
    for s in &spec.seeds {
        out.push_str(marker(s.program.lang()));
        out.push_str(s.program.canonical());
        out.push_str("\n# question:");
        out.push_str(&s.question);
        out.push_str("\n\n");
    }
    out.push_str(marker(spec.target.lang()));
    out.push_str(spec.target.canonical());
    out.push('\n');
    out
}

#[derive(Clone)]
pub enum TranslationProvider<'a> {
    Remote(Arc<dyn Completion + 'a>),
    Offline(Verbalizer<'a>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("completion contained no question")]
    EmptyCompletion,
}

/// First line of a completion with an optional `# question:` marker removed.
pub fn parse_completion(raw: &str) -> Result<String, TranslateError> {
    let first = raw.trim_start().lines().next().unwrap_or("");
    let q = first.strip_prefix("# question:").unwrap_or(first).trim();
    if q.is_empty() {
        Err(TranslateError::EmptyCompletion)
    } else {
        Ok(q.to_owned())
    }
}

pub fn translate(spec: &PromptSpec, provider: &TranslationProvider<'_>) -> Result<String, TranslateError> {
    match provider {
        TranslationProvider::Offline(v) => parse_completion(&v.question(&spec.target)),
        TranslationProvider::Remote(c) => parse_completion(&c.complete(&render_prompt(spec))?),
    }
}

/// Picks up to `n` seeds, preferring ones whose templates have not been picked yet.
pub fn select_seeds(seeds: &[SeedPair], n: usize) -> Vec<SeedPair> {
    let mut chosen = vec![false; seeds.len()];
    let mut origins = HashSet::new();
    let mut out = Vec::new();
    for (i, s) in seeds.iter().enumerate() {
        if out.len() >= n {
            break;
        }
        if origins.insert(extract_template(&s.program).canonical().to_owned()) {
            chosen[i] = true;
            out.push(i);
        }
    }
    for i in 0..seeds.len() {
        if out.len() >= n {
            break;
        }
        if !chosen[i] {
            out.push(i);
        }
    }
    out.sort_unstable();
    out.into_iter().map(|i| seeds[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TranslateReport {
    pub translated: usize,
    pub dropped: usize,
    pub provider_failures: usize,
}

/// Translates every program, keeping input order and dropping failures.
pub fn translate_corpus(
    programs: &[Program],
    seeds: &[SeedPair],
    provider: &TranslationProvider<'_>,
    kb: &KnowledgeBase,
    parallelism: usize,
) -> (Vec<DataPair>, TranslateReport) {
    let work = |p: &Program| -> Result<DataPair, Option<TranslateError>> {
        let answers = p.execute(kb).map_err(|_| None)?;
        if answers.is_empty() {
            return Err(None);
        }
        let q = translate(&PromptSpec::new(seeds.to_vec(), p.clone()), provider).map_err(Some)?;
        Ok(DataPair::new(q, p, &answers, Source::Synthetic))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build().expect("thread pool");
    let results: Vec<_> = pool.install(|| programs.par_iter().map(work).collect());
    let mut report = TranslateReport::default();
    let mut out = Vec::new();
    for (p, r) in programs.iter().zip(results) {
        match r {
            Ok(pair) => out.push(pair),
            Err(e) => {
                report.dropped += 1;
                if let Some(e) = e {
                    if matches!(e, TranslateError::Provider(_)) {
                        report.provider_failures += 1;
                    }
                    tracing::warn!(program = %p, error = %e, "translation dropped");
                } else {
                    tracing::warn!(program = %p, "translation dropped: program has no answers");
                }
            }
        }
    }
    report.translated = out.len();
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatClient, RetryPolicy};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    fn sexpr(t: &str) -> Program {
        Program::parse(Lang::Sexpr, t).unwrap()
    }

    fn kb() -> KnowledgeBase {
        KnowledgeBase::parse(
            "e:davinci\tr:art_forms\te:painting\ne:warhol\tr:art_forms\te:printmaking\n@name\te:davinci\t\"Leonardo da Vinci\"\n",
        )
        .unwrap()
    }

    #[test]
    fn one_shot_layout() {
        let seed = SeedPair { program: sexpr("(ARGMAX food.food food.food.energy)"), question: "which food has most energy?".into() };
        let spec = PromptSpec::new(vec![seed], sexpr("(JOIN (R r:a) e:x)"));
        let p = render_prompt(&spec);
        assert_eq!(
            p,
            "### Convert the s-expressions to natural language questions.\n\n\
             # s-expression:(ARGMAX food.food food.food.energy)\n# question:which food has most energy?\n\n\
             # s-expression:(JOIN (R r:a) e:x)\n"
        );
        assert_eq!(p.matches("# s-expression:").count(), 2);
        assert_eq!(p.matches("# question:").count(), 1);
    }

    #[test]
    fn zero_shot_and_sparql() {
        let spec = PromptSpec::new(vec![], sexpr("(JOIN r e)"));
        assert_eq!(render_prompt(&spec), format!("### {SEXPR_INSTRUCTION}\n\n# s-expression:(JOIN r e)\n"));
        let q = Program::parse(Lang::Sparql, "ASK { ?x <r> <e> }").unwrap();
        let p = render_prompt(&PromptSpec::new(vec![], q));
        assert!(p.starts_with("### Convert the sparqls"));
        assert!(p.contains("# sparql:ASK"));
    }

    #[test]
    fn completion_parsing() {
        assert_eq!(parse_completion("# question:foo").unwrap(), "foo");
        assert_eq!(parse_completion("\n  bar baz \nmore").unwrap(), "bar baz");
        assert_eq!(parse_completion("# question:  \n"), Err(TranslateError::EmptyCompletion));
    }

    #[test]
    fn offline() {
        let kb = kb();
        let provider = TranslationProvider::Offline(Verbalizer::new(&kb));
        let spec = PromptSpec::new(vec![], sexpr("(JOIN (R r:art_forms) e:davinci)"));
        let a = translate(&spec, &provider).unwrap();
        assert_eq!(a, "what is the art forms of Leonardo da Vinci?");
        assert_eq!(translate(&spec, &provider).unwrap(), a);
    }

    #[test]
    fn remote_retries_exhausted() {
        let server = crate::llm::mock::serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
        let client = ChatClient::new(&server.url, "m", None, RetryPolicy { max_attempts: 3, backoff: Duration::from_millis(1) });
        let provider = TranslationProvider::Remote(Arc::new(client));
        let err = translate(&PromptSpec::new(vec![], sexpr("(JOIN r e)")), &provider).unwrap_err();
        assert!(matches!(err, TranslateError::Provider(ProviderError::Status { status: 500, attempts: 3 })));
    }

    struct FailOn(String, AtomicUsize);

    impl Completion for FailOn {
        fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
            self.1.fetch_add(1, Ordering::SeqCst);
            if prompt.trim_end().ends_with(&self.0) {
                Err(ProviderError::Status { status: 500, attempts: 1 })
            } else {
                Ok("# question:ok".into())
            }
        }
    }

    #[test]
    fn corpus_drops_failures_in_order() {
        let kb = kb();
        let programs: Vec<Program> = (0..10)
            .map(|i| sexpr(if i % 2 == 0 { "(JOIN (R r:art_forms) e:davinci)" } else { "(JOIN (R r:art_forms) e:warhol)" }))
            .collect();
        let fake = Arc::new(FailOn("e:warhol)".into(), AtomicUsize::new(0)));
        let mut programs = programs;
        programs.truncate(2);
        programs.extend((0..8).map(|_| sexpr("(JOIN (R r:art_forms) e:davinci)")));
        let (pairs, report) = translate_corpus(&programs, &[], &TranslationProvider::Remote(fake.clone()), &kb, 4);
        assert_eq!(report, TranslateReport { translated: 9, dropped: 1, provider_failures: 1 });
        assert_eq!(pairs.len(), 9);
        assert!(pairs.iter().all(|p| p.question == "ok" && p.answers == vec!["e:painting"]));
        assert_eq!(fake.1.load(Ordering::SeqCst), 10);

        let offline = TranslationProvider::Offline(Verbalizer::new(&kb));
        let (pairs, report) = translate_corpus(&programs, &[], &offline, &kb, 2);
        assert_eq!((pairs.len(), report.dropped), (10, 0));
        assert_eq!(pairs[1].question, "what is the art forms of e:warhol?");
        let (pairs, _) = translate_corpus(&[], &[], &offline, &kb, 2);
        assert!(pairs.is_empty());
    }

    #[test]
    fn seeds_prefer_new_templates() {
        let mk = |t: &str| SeedPair { program: sexpr(t), question: "q".into() };
        let seeds = vec![mk("(JOIN (R a) x)"), mk("(JOIN (R b) y)"), mk("(COUNT (JOIN (R a) x))"), mk("(ARGMAX c r)")];
        let got: Vec<String> = select_seeds(&seeds, 3).iter().map(|s| s.program.canonical().to_owned()).collect();
        assert_eq!(got, ["(JOIN (R a) x)", "(COUNT (JOIN (R a) x))", "(ARGMAX c r)"]);
        assert_eq!(select_seeds(&seeds, 10).len(), 4);
    }
}
