//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. The live remote smoke test only runs with
//! `--ignored` or `--include-ignored` and needs `REPUNET_API_KEY`.

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repunet::backend::{JudgmentBackend, RemoteBackend, RemoteConfig, API_KEY_ENV};
use repunet::engine::{run, Ablation, RunResult};
use repunet::events::EventBody;
use repunet::metrics::{behavior_reputation_points, linear_regression};
use repunet::model::{AgentDescription, AgentId, Encounter, GossipRecord, RepuDatabase, Reputation};
use repunet::reputation::{shape_repu_gossip, shape_repu_peer, shape_repu_self, UpdateCause};
use repunet::scenarios::{pd_payoff, trading_round, PayoffMatrix, PdMove, ScenarioAction, TradingState};
use repunet::{Disposition, RunConfig, ScenarioId, ScriptedBackend, SimEvent, Valence};

type Check = Result<String, String>;

fn cfg(scenario: ScenarioId, ablation: Ablation, seed: u64) -> RunConfig {
    RunConfig {
        scenario,
        ablation,
        seed,
        ..RunConfig::default()
    }
}

fn scripted_run(c: &RunConfig) -> RunResult<f64> {
    run(c, &ScriptedBackend::new(c.policy.clone())).expect("scripted runs do not abort")
}

fn c1() -> Check {
    let start = Instant::now();
    let mut means = BTreeMap::new();
    for a in Ablation::ALL {
        let m: f64 = (0..5).map(|k| scripted_run(&cfg(ScenarioId::Pd, a, k)).tail_mean(5)).sum::<f64>() / 5.0;
        means.insert(a, m);
    }
    let elapsed = start.elapsed();
    let (f, g, r, n) = (means[&Ablation::Full], means[&Ablation::NoGossip], means[&Ablation::NoReputation], means[&Ablation::NoRepunet]);
    let detail = format!("full={f:.3} no_gossip={g:.3} no_reputation={r:.3} no_repunet={n:.3} in {:.1}s", elapsed.as_secs_f64());
    let ok = f >= g && g > r && r > n && f >= 0.85 && n <= 0.25 && elapsed <= Duration::from_secs(60);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c2() -> Check {
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_repunet");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for s in ScenarioId::ALL {
        for a in Ablation::ALL {
            let mut logs = Vec::new();
            for k in 0..2 {
                let dir = tmp.path().join(format!("{s}-{a}-{k}"));
                let status = Command::new(bin)
                    .args(["run", "--scenario", s.as_str(), "--ablation", a.as_str(), "--seed", "11", "--out-dir"])
                    .arg(&dir)
                    .output()
                    .map_err(|e| e.to_string())?;
                if !matches!(status.status.code(), Some(0) | Some(3)) {
                    return Err(format!("{s}/{a}: run exited with {:?}", status.status.code()));
                }
                logs.push(std::fs::read(dir.join("events.jsonl")).map_err(|e| e.to_string())?);
            }
            if logs[0] != logs[1] || logs[0].is_empty() {
                return Err(format!("{s}/{a}: logs differ"));
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    let detail = format!("{checked} scenario/ablation pairs byte-identical in {:.1}s", elapsed.as_secs_f64());
    if elapsed <= Duration::from_secs(30) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c3() -> Check {
    let m = PayoffMatrix::default();
    let expected = [
        ((PdMove::C, PdMove::C), (3.0, 3.0)),
        ((PdMove::D, PdMove::D), (1.0, 1.0)),
        ((PdMove::D, PdMove::C), (5.0, 0.0)),
        ((PdMove::C, PdMove::D), (0.0, 5.0)),
    ];
    for ((a, b), want) in expected {
        let got = pd_payoff(a, b, &m);
        if got != want {
            return Err(format!("({a:?},{b:?}) gave {got:?}, want {want:?}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut accepted, mut rejected) = (0, 0);
    for _ in 0..20_000 {
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(0..8) as f64).collect();
        let (t, r, p, s) = (v[0], v[1], v[2], v[3]);
        let dilemma = t > r && r > p && p > s && 2.0 * r > t + s;
        let ok = PayoffMatrix::new(t, r, p, s).is_ok();
        if ok != dilemma {
            return Err(format!("validator disagrees on T={t} R={r} P={p} S={s}"));
        }
        if ok {
            accepted += 1;
        } else {
            rejected += 1;
        }
    }
    Ok(format!("4 cells exact; validator agrees on {accepted} valid and {rejected} invalid matrices"))
}

fn c4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let draw = |rng: &mut ChaCha8Rng, bal: f64| {
        let split = rng.gen::<f64>();
        let invest = if rng.gen_bool(0.1) { None } else { Some(rng.gen::<f64>() * bal) };
        let returned = invest.map(|x| rng.gen::<f64>() * 2.0 * x);
        (split, invest, returned)
    };
    for _ in 0..1000 {
        let (inv, tru) = if rng.gen::<bool>() { (0, 1) } else { (1, 0) };
        let (split, invest, returned) = draw(&mut rng, 10.0);
        let out = trading_round(&TradingState::fresh(inv, tru, 10.0), split, invest, returned).map_err(|e| e.to_string())?;
        let lhs = out.state.balance[&inv] + out.state.balance[&tru] - invest.unwrap_or(0.0);
        if (lhs - 20.0).abs() > 1e-9 {
            return Err(format!("investor + trustee - invested = {lhs}"));
        }
        if out.state.balance.values().any(|b| *b < 0.0) {
            return Err("negative balance".into());
        }
    }
    // a persistent pair trading with random roles
    let mut balance = TradingState::fresh(0, 1, 10.0).balance;
    let mut invested = 0.0;
    for _ in 0..1000 {
        let (inv, tru) = if rng.gen::<bool>() { (0, 1) } else { (1, 0) };
        let mut s = TradingState::fresh(inv, tru, 0.0);
        s.balance = balance.clone();
        let (split, invest, returned) = draw(&mut rng, s.balance[&inv]);
        let out = trading_round(&s, split, invest, returned).map_err(|e| e.to_string())?;
        invested += invest.unwrap_or(0.0);
        let sum: f64 = out.state.balance.values().sum();
        if (sum - invested - 20.0).abs() > 1e-9 * (1.0 + invested) {
            return Err(format!("chained: sum {sum} - invested {invested} != 20"));
        }
        if out.state.balance.values().any(|b| *b < 0.0) {
            return Err("negative balance".into());
        }
        balance = out.state.balance;
    }
    Ok("1000 fresh and 1000 chained trades conserve value, no negative balance".into())
}

fn who(id: AgentId) -> AgentDescription {
    AgentDescription::new(id, Disposition::Prosocial, "acceptance persona".into()).unwrap()
}

/// Independent restatement of the scripted update rule.
fn oracle_mu(prior: Option<f64>, v: f64, w: f64) -> f64 {
    match prior {
        None => 0.5 * v * w,
        Some(p) => (p + 0.2 * v * w).clamp(-1.0, 1.0),
    }
}

fn credibility_weight(c: u8) -> Option<f64> {
    match c {
        1 | 2 => None,
        3 => Some(0.0),
        4 => Some(0.5),
        _ => Some(1.0),
    }
}

fn c5() -> Check {
    let b = ScriptedBackend::default();
    let me = who(0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut updates = 0u64;
    for _ in 0..100_000 {
        let mut db = RepuDatabase::new(0);
        let mut shadow: BTreeMap<AgentId, f64> = BTreeMap::new();
        let mut shadow_self: Option<f64> = None;
        let len = rng.gen_range(1..=6);
        for step in 0..len {
            let other = rng.gen_range(1..4);
            let seq = step as u64;
            match rng.gen_range(0..3) {
                0 | 1 => {
                    let act = |c: bool| if c { ScenarioAction::Cooperate } else { ScenarioAction::Defect };
                    let (ca, cb) = (rng.gen::<bool>(), rng.gen::<bool>());
                    let enc = Encounter {
                        seq,
                        round: 1,
                        a: 0,
                        b: other,
                        scenario: ScenarioId::Pd,
                        action_a: act(ca),
                        action_b: act(cb),
                        transcript: None,
                        payoff_a: 0.0,
                        payoff_b: 0.0,
                    };
                    let (u, _) = shape_repu_peer(&b, &me, &mut db, &enc, seq).map_err(|e| e.to_string())?;
                    let want = oracle_mu(shadow.get(&other).copied(), if cb { 1.0 } else { -1.0 }, 1.0);
                    shadow.insert(other, want);
                    if u.unwrap().after.mu.to_bits() != want.to_bits() {
                        return Err(format!("peer update differs from replay: {want}"));
                    }
                    let (u, _) = shape_repu_self(&b, &me, &mut db, &enc, seq).map_err(|e| e.to_string())?;
                    let want = oracle_mu(shadow_self, if ca { 1.0 } else { -1.0 }, 1.0);
                    shadow_self = Some(want);
                    if u.unwrap().after.mu.to_bits() != want.to_bits() {
                        return Err("self update differs from replay".into());
                    }
                    updates += 2;
                }
                _ => {
                    let gossiper = if other == 1 { 2 } else { 1 };
                    let cred = rng.gen_range(1..=5u8);
                    let v = if rng.gen::<bool>() { Valence::Positive } else { Valence::Negative };
                    let rec = GossipRecord::new(0, other, gossiper, "g".into(), cred, v, seq).unwrap();
                    let (u, _) = shape_repu_gossip(&b, &me, &mut db, &rec, ScenarioId::Pd, seq, seq).map_err(|e| e.to_string())?;
                    match (credibility_weight(cred), u) {
                        (None, None) => {}
                        (Some(w), Some(u)) => {
                            let want = oracle_mu(shadow.get(&other).copied(), v.value(), w);
                            shadow.insert(other, want);
                            if u.after.mu.to_bits() != want.to_bits() {
                                return Err("gossip update differs from replay".into());
                            }
                            updates += 1;
                        }
                        _ => return Err(format!("credibility {cred} handled inconsistently")),
                    }
                }
            }
        }
        for r in db.peer_reputations() {
            if !(-1.0..=1.0).contains(&r.mu) || shadow[&r.target].to_bits() != r.mu.to_bits() {
                return Err(format!("stored μ {} out of range or off replay", r.mu));
            }
        }
    }
    // and the same law over whole-run logs
    for a in [Ablation::Full, Ablation::NoGossip] {
        for s in ScenarioId::ALL {
            let res = scripted_run(&cfg(s, a, 2));
            replay_run(&res)?;
        }
    }
    Ok(format!("100000 sequences ({updates} updates) and 6 full-run logs replay bit-exactly"))
}

/// Re-derives every reputation from the encounter and gossip events of a log.
fn replay_run(res: &RunResult<f64>) -> Result<(), String> {
    let by_seq: BTreeMap<u64, &SimEvent> = res.events.iter().map(|e| (e.seq, e)).collect();
    let mut peers: BTreeMap<(AgentId, AgentId), f64> = BTreeMap::new();
    let mut selves: BTreeMap<AgentId, f64> = BTreeMap::new();
    for e in &res.events {
        let EventBody::ReputationUpdate(u) = &e.body else { continue };
        let cause = by_seq.get(&u.cause_seq).ok_or("dangling cause")?;
        let (v, w) = match (&cause.body, u.cause) {
            (EventBody::Encounter(enc), UpdateCause::DirectEncounter) => (enc.valence_of(u.target).ok_or("target not in encounter")?.value::<f64>(), 1.0),
            (EventBody::Gossip(g), UpdateCause::Gossip) => (g.valence.value(), credibility_weight(g.credibility).ok_or("low-credibility gossip updated")?),
            _ => return Err("cause kind mismatch".into()),
        };
        let slot = if u.owner == u.target { selves.get(&u.owner).copied() } else { peers.get(&(u.owner, u.target)).copied() };
        if slot != u.before.as_ref().map(|r| r.mu) {
            return Err(format!("seq {}: before does not match replayed state", e.seq));
        }
        let want = oracle_mu(slot, v, w);
        if want.to_bits() != u.after.mu.to_bits() {
            return Err(format!("seq {}: logged μ {} vs replayed {want}", e.seq, u.after.mu));
        }
        if u.owner == u.target {
            selves.insert(u.owner, want);
        } else {
            peers.insert((u.owner, u.target), want);
        }
    }
    for db in &res.databases {
        for r in db.peer_reputations() {
            if peers.get(&(db.owner(), r.target)).map(|m| m.to_bits()) != Some(r.mu.to_bits()) {
                return Err(format!("final μ of {} toward {} not reproduced", db.owner(), r.target));
            }
        }
        if db.self_reputation().map(|r: &Reputation<f64>| r.mu.to_bits()) != selves.get(&db.owner()).map(|m| m.to_bits()) {
            return Err("final self reputation not reproduced".into());
        }
    }
    Ok(())
}

fn gossip_law(events: &[SimEvent]) -> Result<usize, String> {
    let mut n = 0;
    for e in events {
        if let EventBody::Gossip(g) = &e.body {
            if g.target == g.gossiper || g.target == g.listener {
                return Err(format!("seq {}: target is a party to the exchange", e.seq));
            }
            n += 1;
        }
    }
    Ok(n)
}

fn c6() -> Check {
    let mut exchanges = 0;
    let mut runs = 0;
    for s in ScenarioId::ALL {
        for a in Ablation::ALL {
            for seed in 0..3 {
                let res = scripted_run(&cfg(s, a, seed));
                exchanges += gossip_law(&res.events)?;
                runs += 1;
                if !a.gossip_enabled() {
                    let bad = res.events.iter().any(|e| match &e.body {
                        EventBody::Gossip(_) => true,
                        EventBody::ReputationUpdate(u) => u.cause == UpdateCause::Gossip,
                        _ => false,
                    });
                    if bad {
                        return Err(format!("{s}/{a}: gossip activity under a gossip-free ablation"));
                    }
                }
            }
        }
    }
    Ok(format!("{exchanges} exchanges over {runs} runs respect the third-party law; gossip-free ablations are silent"))
}

fn c7() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..5 {
        let res = scripted_run(&cfg(ScenarioId::Pd, Ablation::Full, seed));
        let pros = res.prosocial_ids();
        let g = &res.graph;
        // agents that never cooperated over the final window
        let w = res.config.stabilization.window as u32;
        let from = res.rounds_executed.saturating_sub(w) + 1;
        let mut coop: BTreeMap<AgentId, bool> = BTreeMap::new();
        for e in &res.events {
            if let EventBody::Encounter(enc) = &e.body {
                if enc.round >= from {
                    for (id, s) in repunet::scenarios::encounter_signals(enc) {
                        *coop.entry(id).or_insert(false) |= s;
                    }
                }
            }
        }
        let defectors: Vec<AgentId> = coop.iter().filter(|(_, c)| !**c).map(|(id, _)| *id).collect();
        let bad_in = defectors.iter().filter(|d| pros.iter().any(|p| g.has_edge(*p, **d))).count();
        let all: Vec<AgentId> = (0..res.agents.len()).collect();
        let dg = g.reciprocated_density(&all);
        let dp = g.reciprocated_density(&pros);
        let ratio = if dg > 0.0 { dp / dg } else { 0.0 };
        let pass = bad_in == 0 && ratio >= 2.0;
        ok &= pass;
        lines.push(format!(
            "seed {seed}: {} defectors, {bad_in} with prosocial in-edges, ratio {ratio:.2}{}",
            defectors.len(),
            if res.stabilized { "" } else { " (max rounds)" }
        ));
    }
    let detail = lines.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Slope and r from the normal equations [n Σx; Σx Σx²][b a]ᵀ = [Σy Σxy]ᵀ.
fn normal_equations(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (sxx, sxy, syy) = pts.iter().fold((0.0, 0.0, 0.0), |(a, b, c), (x, y)| (a + x * x, b + x * y, c + y * y));
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    (slope, intercept, r)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-12
}

fn c8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in 0..100 {
        let n = rng.gen_range(3..60);
        let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-5.0..5.0));
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x: f64 = rng.gen_range(-10.0..10.0);
                (x, a * x + b + rng.gen_range(-4.0..4.0))
            })
            .collect();
        let got = repunet::metrics::linear_regression_with(&pts, 0, 0).map_err(|e| e.to_string())?;
        let (s, i, r) = normal_equations(&pts);
        if !(close(got.slope, s) && close(got.intercept, i) && close(got.r, r)) {
            return Err(format!("dataset {k}: ({}, {}, {}) vs oracle ({s}, {i}, {r})", got.slope, got.intercept, got.r));
        }
    }
    let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.5 * i as f64 - 1.0)).collect();
    let l = linear_regression(&line).map_err(|e| e.to_string())?;
    if !(close(l.slope, 2.5) && close(l.r, 1.0)) {
        return Err(format!("exact line gave slope {} r {}", l.slope, l.r));
    }
    let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 4.0)).collect();
    let c = linear_regression(&flat).map_err(|e| e.to_string())?;
    if (c.slope, c.r) != (0.0, 0.0) {
        return Err(format!("constant y gave slope {} r {}", c.slope, c.r));
    }
    Ok("100 datasets within 1e-9 of the normal equations; exact line (2.5, 1); constant y (0, 0)".into())
}

fn c9() -> Check {
    let res = scripted_run(&cfg(ScenarioId::Pd, Ablation::Full, RunConfig::default().seed));
    let pts = behavior_reputation_points(&res.events, 10);
    let xy: Vec<(f64, f64)> = pts.points.iter().map(|p| (p.x, p.y)).collect();
    let reg = linear_regression(&xy).map_err(|e| e.to_string())?;
    let detail = format!("slope {:.3}, r {:.3}, p_perm {:.4}, n {}", reg.slope, reg.r, reg.p_perm, reg.n);
    if reg.slope > 0.0 && reg.p_perm <= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c10() -> Check {
    let key = std::env::var(API_KEY_ENV).map_err(|_| format!("{API_KEY_ENV} is not set"))?;
    let c = RunConfig {
        n_agents: 4,
        max_rounds: 5,
        ..RunConfig::default()
    };
    let backend = RemoteBackend::new(RemoteConfig::default(), Some(key)).map_err(|e| e.to_string())?;
    let b: &dyn JudgmentBackend<f64> = &backend;
    let res = run(&c, b).map_err(|e| e.to_string())?;
    for db in &res.databases {
        if db.peer_reputations().any(|r| !(-1.0..=1.0).contains(&r.mu)) {
            return Err("μ out of range".into());
        }
    }
    let n = gossip_law(&res.events)?;
    Ok(format!("{} rounds, {} events, {n} exchanges", res.rounds_executed, res.events.len()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let live = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let listing = args.iter().any(|a| a == "--list");
    let checks: [(u8, fn() -> Check); 9] = [(1, c1), (2, c2), (3, c3), (4, c4), (5, c5), (6, c6), (7, c7), (8, c8), (9, c9)];
    if listing {
        for (n, _) in checks {
            println!("criterion_{n}: test");
        }
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    if !(live && args.iter().any(|a| a == "--ignored")) {
        for (n, f) in checks {
            match f() {
                Ok(d) => println!("criterion {n}: PASS ({d})"),
                Err(d) => {
                    failed += 1;
                    println!("criterion {n}: FAIL ({d})");
                }
            }
        }
    }
    if live {
        match c10() {
            Ok(d) => println!("criterion 10: PASS ({d})"),
            Err(d) => {
                failed += 1;
                println!("criterion 10: FAIL ({d})");
            }
        }
    } else {
        println!("criterion 10: ignored (live backend; run with --ignored and {API_KEY_ENV} set)");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
