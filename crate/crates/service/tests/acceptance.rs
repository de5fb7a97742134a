//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use lens_core::conventions::{dominant_style, profile_repository, NamingStyle};
use lens_core::explain::{
    card_context, generate_validated, schema, validate_and_repair, Engine, EngineConfig,
    GenerationBackend, ScriptedBackend, TemplateBackend,
};
use lens_core::index::{index_from_files, KindTable};
use lens_core::influence::{directory_distance, rank_influences, Ranker, Weights};
use lens_core::ingest::{
    apply_hunks, diff_texts, parse_unified_diff, render_unified, FileModification, ModificationKind,
};
use lens_core::{ArtifactId, RepoIndex};
use lens_service::{Registry, Session, Status, Store, StreamEvent};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn runtime() -> &'static tokio::runtime::Runtime {
    static RT: OnceLock<tokio::runtime::Runtime> = OnceLock::new();
    RT.get_or_init(|| tokio::runtime::Runtime::new().unwrap())
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo")
}

// ---------------------------------------------------------------- diff

fn random_text(rng: &mut ChaCha8Rng, max_lines: usize) -> Vec<String> {
    const ALPHABET: &[&str] = &[
        "",
        "x = 1",
        "    return x",
        "}",
        "fn f() {",
        "# note",
        "a",
        "b",
        "c",
        "\tindent",
    ];
    let n = rng.gen_range(0..=max_lines);
    (0..n)
        .map(|_| ALPHABET.choose(rng).unwrap().to_string())
        .collect()
}

fn join(lines: &[String], final_newline: bool) -> String {
    let mut s = lines.join("\n");
    if final_newline && !lines.is_empty() {
        s.push('\n');
    }
    s
}

fn mutate(rng: &mut ChaCha8Rng, pre: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for line in pre {
        match rng.gen_range(0..10) {
            0 => {}
            1 => out.push(format!("changed {}", rng.gen_range(0..5))),
            2 => {
                out.push(line.clone());
                out.push(format!("inserted {}", rng.gen_range(0..5)));
            }
            _ => out.push(line.clone()),
        }
    }
    if rng.gen_bool(0.3) {
        out.extend(random_text(rng, 20));
    }
    out.truncate(500);
    out
}

fn diff_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0d1f);
    let start = Instant::now();
    let mut failures = Vec::new();
    for i in 0..200 {
        let (pre, post) = match i {
            0 => (String::new(), String::new()),
            1 => (String::new(), "only\n".to_string()),
            2 => ("only\n".to_string(), String::new()),
            3 => ("a\nb".to_string(), "a\nb\n".to_string()),
            4 => ("a\nb\n".to_string(), "a\nc".to_string()),
            _ => {
                let pre = random_text(&mut rng, 500);
                let post = mutate(&mut rng, &pre);
                (
                    join(&pre, rng.gen_bool(0.8)),
                    join(&post, rng.gen_bool(0.8)),
                )
            }
        };
        let rendered = render_unified(&diff_texts(&pre, &post, 3));
        let outcome = parse_unified_diff(&rendered)
            .map_err(|e| e.to_string())
            .and_then(|hunks| {
                apply_hunks(&pre, &hunks).map_err(|e| e.into_error("pair").to_string())
            });
        match outcome {
            Ok(applied) if applied == post => {}
            Ok(_) => failures.push(format!("pair {}: output differs", i)),
            Err(e) => failures.push(format!("pair {}: {}", i, e)),
        }
    }
    let elapsed = start.elapsed();
    ensure(failures.is_empty(), || failures.join("; "))?;
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {:?}", elapsed)
    })?;
    Ok(format!("200 pairs, 0 failures, {:.2?}", elapsed))
}

// ---------------------------------------------------------------- corpora

struct Corpus {
    repo: support::SynthRepo,
    index: RepoIndex,
}

fn corpora() -> &'static Vec<Corpus> {
    static C: OnceLock<Vec<Corpus>> = OnceLock::new();
    C.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
        (0..24)
            .map(|i| {
                let n = if i == 0 { 50 } else { rng.gen_range(2..=49) };
                let repo = support::repo(&mut rng, n);
                let contents: Vec<(String, String)> = repo
                    .files
                    .iter()
                    .map(|f| (f.path.clone(), f.contents()))
                    .collect();
                let index = index_from_files(
                    contents.iter().map(|(p, c)| (p.as_str(), c.as_str())),
                    &KindTable::default(),
                )
                .unwrap();
                Corpus { repo, index }
            })
            .collect()
    })
}

fn posting_soundness() -> Outcome {
    let mut checked = 0usize;
    for (ci, c) in corpora().iter().enumerate() {
        let mut expected: BTreeSet<(String, String, u32)> = BTreeSet::new();
        for f in &c.repo.files {
            for (i, line) in f.lines.iter().enumerate() {
                for part in &line.parts {
                    expected.insert((part.clone(), f.path.clone(), i as u32 + 1));
                }
            }
        }
        let path_of: BTreeMap<&ArtifactId, &str> = c
            .index
            .artifacts()
            .iter()
            .map(|a| (&a.artifact_id, a.path.as_str()))
            .collect();
        let mut actual: BTreeSet<(String, String, u32)> = BTreeSet::new();
        for (token, postings) in c.index.postings() {
            for p in postings {
                for line in p.span.start..=p.span.end {
                    actual.insert((token.clone(), path_of[&p.artifact_id].to_string(), line));
                }
            }
        }
        let unsound: Vec<_> = actual.difference(&expected).take(3).collect();
        let missing: Vec<_> = expected.difference(&actual).take(3).collect();
        ensure(unsound.is_empty(), || {
            format!("corpus {}: unsound postings {:?}", ci, unsound)
        })?;
        ensure(missing.is_empty(), || {
            format!("corpus {}: missing postings {:?}", ci, missing)
        })?;
        checked += expected.len();

        // query_postings against a linear scan of every file
        let mut rng = ChaCha8Rng::seed_from_u64(ci as u64);
        for _ in 0..10 {
            let query: BTreeSet<String> = (0..rng.gen_range(0..6))
                .map(|_| support::WORDS.choose(&mut rng).unwrap().to_string())
                .collect();
            let bag = query.iter().map(|t| (t.clone(), 1)).collect();
            let hits = c.index.query_postings(&bag);
            let mut scan: BTreeMap<String, (usize, usize, BTreeSet<u32>)> = BTreeMap::new();
            for f in &c.repo.files {
                let mut distinct = BTreeSet::new();
                let mut total = 0;
                let mut lines = BTreeSet::new();
                for (i, line) in f.lines.iter().enumerate() {
                    let on_line: BTreeSet<&String> =
                        line.parts.iter().filter(|p| query.contains(*p)).collect();
                    total += on_line.len();
                    if !on_line.is_empty() {
                        lines.insert(i as u32 + 1);
                    }
                    distinct.extend(on_line);
                }
                if total > 0 {
                    scan.insert(f.path.clone(), (distinct.len(), total, lines));
                }
            }
            let got: BTreeMap<String, (usize, usize, BTreeSet<u32>)> = hits
                .iter()
                .map(|(id, h)| {
                    let lines = h.spans.iter().flat_map(|s| s.start..=s.end).collect();
                    (
                        path_of[id].to_string(),
                        (h.distinct_tokens, h.total_hits, lines),
                    )
                })
                .collect();
            ensure(got == scan, || {
                format!("corpus {}: query {:?} differs from scan", ci, query)
            })?;
        }
    }
    Ok(format!(
        "{} corpora, {} (token, line) occurrences, 0 mismatches",
        corpora().len(),
        checked
    ))
}

/// Direct evaluation of the scoring formula from ground truth.
fn oracle_ranking(
    repo: &support::SynthRepo,
    changed: &str,
    change_tokens: &BTreeSet<String>,
) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for f in &repo.files {
        if f.path == changed {
            continue;
        }
        let tokens = f.tokens();
        let inter = tokens.intersection(change_tokens).count();
        let union = tokens.union(change_tokens).count();
        let overlap = if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        };
        let linked = repo.edges.contains(&(changed.to_string(), f.path.clone()))
            || repo.edges.contains(&(f.path.clone(), changed.to_string()));
        let doc = f.doc && inter > 0;
        let dirs = |p: &str| -> Vec<String> {
            let mut v: Vec<String> = p.split('/').map(str::to_string).collect();
            v.pop();
            v
        };
        let (da, db) = (dirs(changed), dirs(&f.path));
        let common = da.iter().zip(&db).take_while(|(x, y)| x == y).count();
        let d = (da.len() - common) + (db.len() - common);
        // proximity only counts alongside another signal
        let proximity = if overlap > 0.0 || linked || doc {
            1.0 / (1.0 + d as f64)
        } else {
            0.0
        };
        let score = 0.5 * overlap
            + 0.3 * f64::from(linked as u8)
            + 0.1 * proximity
            + 0.1 * f64::from(doc as u8);
        if score > 0.0 {
            out.push((f.path.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

fn ranker_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c0e);
    let mut cases = 0;
    let mut ties = 0;
    for (ci, c) in corpora().iter().enumerate() {
        let table = c.repo.parts_of_text();
        let files: Vec<&support::SynthFile> = c.repo.files.iter().collect();
        for _ in 0..5 {
            let target = files.choose(&mut rng).unwrap();
            let post = target.contents();
            let pre = if rng.gen_bool(0.3) {
                String::new()
            } else {
                support::thin_out(&mut rng, target)
            };
            let modification = FileModification {
                path: target.path.clone(),
                kind: if pre.is_empty() {
                    ModificationKind::Created
                } else {
                    ModificationKind::Modified
                },
                hunks: diff_texts(&pre, &post, 3),
                order_index: 0,
                post_symbols: vec![],
                introduced_symbols: vec![],
            };
            let change_tokens: BTreeSet<String> = modification
                .hunks
                .iter()
                .flat_map(|h| h.added_lines())
                .flat_map(|l| table[l].iter().cloned())
                .collect();
            let expected = oracle_ranking(&c.repo, &target.path, &change_tokens);
            ties += expected.windows(2).filter(|w| w[0].1 == w[1].1).count();

            let all = Ranker::new(Weights::default(), usize::MAX)
                .rank(&modification, &c.index)
                .unwrap();
            let got: Vec<(String, f64)> = all.iter().map(|x| (x.path.clone(), x.score)).collect();
            ensure(got == expected, || {
                format!(
                    "corpus {} change {}: got {:?}, oracle {:?}",
                    ci, target.path, got, expected
                )
            })?;
            let top = rank_influences(&modification, &c.index, 5).unwrap();
            let top: Vec<(String, f64)> = top.iter().map(|x| (x.path.clone(), x.score)).collect();
            ensure(top.as_slice() == &expected[..expected.len().min(5)], || {
                format!("corpus {}: k=5 truncation differs", ci)
            })?;

            for cand in &all {
                ensure(
                    !cand.evidence.is_empty() && cand.evidence.len() <= 3,
                    || format!("{}: {} evidence spans", cand.path, cand.evidence.len()),
                )?;
                for w in cand.evidence.windows(2) {
                    ensure(w[0].span.end < w[1].span.start, || {
                        format!("{}: evidence overlaps or unsorted", cand.path)
                    })?;
                }
                for a in &cand.evidence {
                    c.index.resolve_anchor(a).map_err(|e| e.to_string())?;
                }
                let d = directory_distance(&target.path, &cand.path) as f64;
                ensure(cand.score_parts.path_proximity == 1.0 / (1.0 + d), || {
                    "proximity mismatch".into()
                })?;
            }
            cases += 1;
        }
    }
    Ok(format!(
        "{} repos, {} changes ranked, {} ties, 0 mismatches",
        corpora().len(),
        cases,
        ties
    ))
}

// ---------------------------------------------------------------- conventions

fn convention_fixture() -> Outcome {
    // 20 files, one definition each, counted by hand
    let mut files: Vec<(String, String)> = Vec::new();
    for i in 0..15 {
        files.push((
            format!("m{:02}.py", i),
            format!(
                "def load_item_{}():\n    return 1\n",
                ["a", "b", "c", "d", "e"][i % 5]
            ),
        ));
    }
    for (i, name) in ["loadItem", "parseRow", "fetchAll"].iter().enumerate() {
        files.push((
            format!("m{:02}.py", 15 + i),
            format!("def {}():\n    return 1\n", name),
        ));
    }
    for (i, name) in ["UserRecord", "RowCache"].iter().enumerate() {
        files.push((
            format!("m{:02}.py", 18 + i),
            format!("class {}:\n    pass\n", name),
        ));
    }
    let index = index_from_files(
        files.iter().map(|(p, c)| (p.as_str(), c.as_str())),
        &KindTable::default(),
    )
    .map_err(|e| e.to_string())?;
    let profile = profile_repository(&index);
    let dist = &profile.naming_distribution;
    let get = |s: NamingStyle| dist.get(&s).copied().unwrap_or(0.0);
    let expected = [
        (NamingStyle::Snake, 0.75),
        (NamingStyle::Camel, 0.15),
        (NamingStyle::Pascal, 0.10),
    ];
    for (style, want) in expected {
        ensure((get(style) - want).abs() <= 1e-9, || {
            format!("{:?}: {} vs {}", style, get(style), want)
        })?;
    }
    ensure(
        get(NamingStyle::Screaming) == 0.0 && get(NamingStyle::Ambiguous) == 0.0,
        || format!("{:?}", dist),
    )?;
    ensure(profile.dominant_naming == Some(NamingStyle::Snake), || {
        format!("{:?}", profile.dominant_naming)
    })?;

    // boundary, directly and through a profile
    let at = |f: f64| BTreeMap::from([(NamingStyle::Snake, f), (NamingStyle::Camel, 1.0 - f)]);
    ensure(
        dominant_style(&at(0.700), 0.7) == Some(NamingStyle::Snake),
        || "0.700 not dominant".into(),
    )?;
    ensure(dominant_style(&at(0.699), 0.7).is_none(), || {
        "0.699 dominant".into()
    })?;
    let body = |snake: usize, total: usize| -> String {
        (0..total)
            .map(|i| {
                if i < snake {
                    format!("def snake_fn_{}():\n    pass\n", words(i))
                } else {
                    format!("def camelFn{}():\n    pass\n", words(i).to_uppercase())
                }
            })
            .collect()
    };
    for (snake, total, dominant) in [(700, 1000, true), (699, 1000, false)] {
        let text = body(snake, total);
        let idx = index_from_files([("big.py", text.as_str())], &KindTable::default())
            .map_err(|e| e.to_string())?;
        let p = profile_repository(&idx);
        let share = p
            .naming_distribution
            .get(&NamingStyle::Snake)
            .copied()
            .unwrap_or(0.0);
        ensure(p.naming_counts.values().sum::<usize>() == total, || {
            format!("{} symbols found", p.naming_counts.values().sum::<usize>())
        })?;
        ensure(p.dominant_naming.is_some() == dominant, || {
            format!("share {} dominant {:?}", share, p.dominant_naming)
        })?;
    }
    Ok("distribution (0.75, 0.15, 0.10) within 1e-9; 0.700 dominant, 0.699 not".into())
}

/// Distinct lowercase letter suffixes so names never collide.
fn words(i: usize) -> String {
    let mut n = i;
    let mut s = String::new();
    loop {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            break s;
        }
    }
}

// ---------------------------------------------------------------- sessions

struct ServedSession {
    expected_paths: Vec<String>,
    repo_dir: tempfile::TempDir,
    session: Arc<Session>,
    streamed: Vec<StreamEvent>,
}

fn registry(store: &Path) -> Arc<Registry> {
    Arc::new(
        Registry::open(
            Store::open(store).unwrap(),
            Arc::new(TemplateBackend),
            EngineConfig::default(),
        )
        .unwrap(),
    )
}

/// Runs a session through the service and collects its event stream.
fn serve_session(
    registry: &Registry,
    log: &Value,
    repo: &Path,
) -> (Arc<Session>, Vec<StreamEvent>) {
    let (session, pending) = registry
        .create(log.to_string().as_bytes(), Some(repo.to_path_buf()))
        .unwrap();
    let (mut events, rx) = session.subscribe();
    let pending = pending.expect("new session");
    let worker = std::thread::spawn(move || pending.run());
    if let Some(mut rx) = rx {
        runtime().block_on(async {
            loop {
                let e = rx.recv().await.unwrap();
                let done = e.is_terminal();
                events.push(e);
                if done {
                    break;
                }
            }
        });
    }
    worker.join().unwrap();
    (session, events)
}

fn synthetic_sessions(
    registry: &Registry,
    count: usize,
    seed: u64,
    max_files: usize,
) -> Vec<ServedSession> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.gen_range(2..=max_files);
            let mut repo = support::repo(&mut rng, n);
            let plan =
                support::session(&mut rng, &mut repo, &format!("synthetic-{}-{}", seed, i), 8);
            let dir = tempfile::tempdir().unwrap();
            repo.write_to(dir.path());
            let (session, streamed) = serve_session(registry, &plan.log, dir.path());
            ServedSession {
                expected_paths: plan.expected_paths,
                repo_dir: dir,
                session,
                streamed,
            }
        })
        .collect()
}

fn level1_contract() -> Outcome {
    let store = tempfile::tempdir().unwrap();
    let reg = registry(store.path());
    let mut served = synthetic_sessions(&reg, 30, 0x1e1, 30);
    let demo_log: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture().join("session.json")).unwrap())
            .unwrap();
    let (demo, demo_events) = serve_session(&reg, &demo_log, &fixture().join("repo"));
    served.push(ServedSession {
        expected_paths: vec!["src/app/profile_cache.py".into(), "src/app/users.py".into()],
        repo_dir: tempfile::tempdir().unwrap(),
        session: demo,
        streamed: demo_events,
    });
    let mut cards = 0;
    for s in &served {
        let id = &s.session.session_id;
        ensure(s.session.status() == Status::Level1Ready, || {
            format!("{}: {:?} {:?}", id, s.session.status(), s.streamed.last())
        })?;
        let doc = s.session.level1().map_err(|e| e.to_string())?;
        let streamed: Vec<_> = s
            .streamed
            .iter()
            .filter_map(|e| match e {
                StreamEvent::Card(c) => Some(c.clone()),
                _ => None,
            })
            .collect();
        let order: Vec<usize> = streamed.iter().map(|c| c.order_index).collect();
        ensure(order.windows(2).all(|w| w[0] < w[1]), || {
            format!("{}: stream order {:?}", id, order)
        })?;
        ensure(
            matches!(s.streamed.last(), Some(StreamEvent::Complete(_))),
            || format!("{}: no completion", id),
        )?;
        ensure(streamed == doc.cards, || {
            format!("{}: streamed cards differ from the document", id)
        })?;
        let paths: Vec<&str> = doc.cards.iter().map(|c| c.path.as_str()).collect();
        ensure(paths == s.expected_paths, || {
            format!(
                "{}: cards {:?} vs modifications {:?}",
                id, paths, s.expected_paths
            )
        })?;
        ensure(
            doc.cards
                .iter()
                .enumerate()
                .all(|(i, c)| c.order_index == i),
            || format!("{}: order_index gaps", id),
        )?;
        ensure(s.session.ranker_calls() == 0, || {
            format!("{}: ranker ran {} times", id, s.session.ranker_calls())
        })?;
        cards += doc.cards.len();
    }
    // the first Level 2 request is the first ranking
    let s = &served[0];
    runtime()
        .block_on(s.session.level2(0))
        .map_err(|e| e.to_string())?;
    ensure(s.session.ranker_calls() == 1, || {
        "level 2 did not rank exactly once".into()
    })?;
    Ok(format!(
        "{} sessions, {} cards, ascending streams, 0 ranker calls before level 2",
        served.len(),
        cards
    ))
}

fn determinism() -> Outcome {
    let demo_log = std::fs::read(fixture().join("session.json")).unwrap();
    let repo = fixture().join("repo");
    let agent = lens_core::ingest::parse_session_log(&demo_log).map_err(|e| e.to_string())?;

    // two independent in-process runs
    let run = || -> Result<(String, Vec<String>), String> {
        let index = lens_core::index::scan_repository(&repo, &Default::default())
            .map_err(|e| e.to_string())?;
        let timeline =
            lens_core::ingest::build_timeline(&agent, &lens_core::ingest::DirSnapshot::new(&repo))
                .map_err(|e| e.to_string())?;
        let engine = Engine::template();
        let l1 = engine
            .level1(&agent.task_prompt, &timeline, &index, &mut |_| {})
            .map_err(|e| e.to_string())?;
        let profile = profile_repository(&index);
        let l2 = timeline
            .iter()
            .map(|m| {
                engine
                    .level2(&agent.task_prompt, m, &index, &profile)
                    .map(|d| serde_json::to_string(&d).unwrap())
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Ok((serde_json::to_string(&l1).unwrap(), l2))
    };
    let a = run()?;
    let b = run()?;
    ensure(a == b, || "two runs differ".into())?;

    // service, then a fresh service on the same store
    let store = tempfile::tempdir().unwrap();
    let first = {
        let reg = registry(store.path());
        let mut served = synthetic_sessions(&reg, 5, 0xde7, 20);
        let demo_json: Value = serde_json::from_slice(&demo_log).unwrap();
        let (demo, _) = serve_session(&reg, &demo_json, &repo);
        served.push(ServedSession {
            expected_paths: vec![],
            repo_dir: tempfile::tempdir().unwrap(),
            session: demo,
            streamed: vec![],
        });
        let mut out = BTreeMap::new();
        for s in &served {
            let l1 =
                serde_json::to_string(&s.session.level1().map_err(|e| e.to_string())?).unwrap();
            let n = s.session.level1().unwrap().cards.len();
            let mut l2 = Vec::new();
            for i in 0..n {
                l2.push(
                    runtime()
                        .block_on(s.session.level2(i))
                        .map_err(|e| e.to_string())?
                        .to_string(),
                );
            }
            out.insert(s.session.session_id.clone(), (l1, l2));
        }
        // keep the synthetic repos alive until here
        drop(served);
        out
    };
    ensure(
        first
            .get("demo-profile-cache")
            .map(|(l1, l2)| (l1.clone(), l2.clone()))
            == Some(a.clone()),
        || "service output differs from the direct run".into(),
    )?;
    let reg = registry(store.path());
    for (id, (l1, l2)) in &first {
        let s = reg.get(id).map_err(|e| e.to_string())?;
        let reread = serde_json::to_string(&s.level1().map_err(|e| e.to_string())?).unwrap();
        ensure(&reread == l1, || {
            format!("{}: level 1 differs after restart", id)
        })?;
        for (i, bytes) in l2.iter().enumerate() {
            let again = runtime().block_on(s.level2(i)).map_err(|e| e.to_string())?;
            ensure(&*again == bytes.as_str(), || {
                format!("{}: level 2 #{} differs after restart", id, i)
            })?;
        }
        ensure(s.ranker_calls() == 0, || {
            format!("{}: restart recomputed level 2", id)
        })?;
    }
    Ok(format!(
        "2 runs identical; {} sessions byte-identical after store restart",
        first.len()
    ))
}

// ---------------------------------------------------------------- documents

struct Documents {
    /// `(session index, document)`
    docs: Vec<(usize, Value)>,
    sessions: Vec<ServedSession>,
    _store: tempfile::TempDir,
}

fn documents() -> &'static Documents {
    static D: OnceLock<Documents> = OnceLock::new();
    D.get_or_init(|| {
        let store = tempfile::tempdir().unwrap();
        let reg = registry(store.path());
        let mut sessions = Vec::new();
        let mut docs = Vec::new();
        let mut seed = 0xa2c0;
        while docs.len() < 1000 {
            seed += 1;
            for s in synthetic_sessions(&reg, 10, seed, 25) {
                let si = sessions.len();
                let l1 = s.session.level1().unwrap();
                docs.push((si, serde_json::to_value(&l1).unwrap()));
                for i in 0..l1.cards.len() {
                    let bytes = runtime().block_on(s.session.level2(i)).unwrap();
                    docs.push((si, serde_json::from_str(&bytes).unwrap()));
                }
                sessions.push(s);
            }
        }
        Documents {
            docs,
            sessions,
            _store: store,
        }
    })
}

fn schema_closure() -> Outcome {
    let d = documents();
    let mut level2 = 0;
    for (i, (_, doc)) in d.docs.iter().enumerate() {
        let s = if doc.get("cards").is_some() {
            schema::level1()
        } else {
            schema::level2()
        };
        if s.name == schema::level2().name {
            level2 += 1;
        }
        let errors = s.errors(doc);
        ensure(errors.is_empty(), || {
            format!("document {}: {:?}", i, errors)
        })?;
    }

    // exhaustion: always-invalid output
    let idx = index_from_files([("a.py", "x = 1\n")], &KindTable::default()).unwrap();
    let m = FileModification {
        path: "a.py".into(),
        kind: ModificationKind::Created,
        hunks: diff_texts("", "x = 1\n", 3),
        order_index: 0,
        post_symbols: vec![],
        introduced_symbols: vec![],
    };
    let prompt = card_context("t", &m, &idx, 1000).unwrap();
    for max_repairs in 0..=4 {
        let bad = json!({"title": 7});
        let backend = ScriptedBackend::new(vec![bad.clone(); max_repairs + 3]);
        let err = generate_validated(&backend, &prompt, schema::card_content(), max_repairs, None);
        ensure(err.is_err() && backend.calls() == max_repairs + 1, || {
            format!(
                "generate: max_repairs {} made {} calls",
                max_repairs,
                backend.calls()
            )
        })?;

        let backend = ScriptedBackend::new(vec![bad.clone(); max_repairs + 3]);
        let raw = backend.generate(&prompt, schema::card_content()).unwrap();
        let err = validate_and_repair(
            raw,
            schema::card_content(),
            &backend,
            &prompt,
            max_repairs,
            None,
        );
        ensure(err.is_err() && backend.calls() == max_repairs + 1, || {
            format!(
                "repair: max_repairs {} made {} calls",
                max_repairs,
                backend.calls()
            )
        })?;
    }
    Ok(format!(
        "{} documents ({} level 1, {} level 2) valid; exhaustion after max_repairs+1 calls for 0..=4",
        d.docs.len(),
        d.docs.len() - level2,
        level2
    ))
}

fn anchor_totality() -> Outcome {
    let d = documents();
    let mut anchors = 0;
    for (i, (si, doc)) in d.docs.iter().enumerate() {
        let served = &d.sessions[*si];
        let mut found = Vec::new();
        collect_anchors(doc, &mut found);
        for a in found {
            let aid = a["artifact_id"].as_str().unwrap();
            let start = a["span"]["start"].as_u64().unwrap() as u32;
            let end = a["span"]["end"].as_u64().unwrap() as u32;
            let slice = served
                .session
                .artifact_slice(aid, Some(start), Some(end))
                .map_err(|e| format!("document {}: anchor {}:{}..{}: {}", i, aid, start, end, e))?;
            let path = served.repo_dir.path().join(slice["path"].as_str().unwrap());
            let text = std::fs::read_to_string(path).unwrap();
            let lines: Vec<&str> = text.split_inclusive('\n').collect();
            let want = lines[start as usize - 1..end as usize].concat();
            ensure(slice["text"] == want.as_str(), || {
                format!("document {}: slice text differs", i)
            })?;
            anchors += 1;
        }
    }
    Ok(format!(
        "{} documents, {} anchors, all resolve",
        d.docs.len(),
        anchors
    ))
}

/// Every object that looks like an anchor, anywhere in the document.
fn collect_anchors<'a>(v: &'a Value, out: &mut Vec<&'a Value>) {
    match v {
        Value::Object(map) => {
            if map.contains_key("artifact_id")
                && map.contains_key("span")
                && map.contains_key("label")
            {
                out.push(v);
            }
            map.values().for_each(|x| collect_anchors(x, out));
        }
        Value::Array(items) => items.iter().for_each(|x| collect_anchors(x, out)),
        _ => {}
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("diff round-trip", diff_round_trip),
        ("ranker oracle equivalence", ranker_oracle),
        ("posting soundness and completeness", posting_soundness),
        (
            "convention fixture and dominance boundary",
            convention_fixture,
        ),
        ("level 1 contract", level1_contract),
        ("determinism", determinism),
        ("schema closure", schema_closure),
        ("anchor totality", anchor_totality),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {}: {} [{:.1?}]", name, detail, took),
            Err(why) => {
                failed += 1;
                println!("FAIL  {}: {} [{:.1?}]", name, why, took);
            }
        }
    }
    if failed > 0 {
        println!("{} acceptance criteria failed", failed);
        std::process::exit(1);
    }
}
