//! The three processes of a distributed run.
//!
//! The source owns the joint quantum simulation; Alice and Bob hold only
//! classical data plus operation-scoped requests against it, so the
//! Alice -> Bob channel carries nothing but post-selection bits. Message
//! flow per copy is fully deterministic: Alice asks the source for her
//! outcome(s), forwards the (ANDed) bit to Bob, and Bob asks the source
//! for one B measurement if and only if the bit is 1. The source therefore
//! always knows which connection speaks next and never needs to poll.
//!
//! Every random draw happens at the source, in exactly the order the
//! in-process sampler consumes its sub-stream, which is what makes the
//! distributed run bit-identical to `run_protocol` in sampled mode.

use crate::config::ResolvedExperiment;
use crate::protocol::{invert_im, invert_re, reconstruct_state, ReconstructionResult};
use crate::qmat::eigh;
use crate::stats::{error_propagation, round_overlap_contributions, BitLedger, OutcomeAccumulator, RoundBits, RoundContext, RoundSample};
use crate::weakcore::{WeakValueKind, WeakValueRecord};
use crate::wire::frame::{Payload, Role};
use crate::wire::net::{bind, connect_with_retry, hello_exchange, Wire};
use crate::wire::session::{LogEvent, MessageLog, SessionConfig};
use crate::wire::WireError;
use std::net::TcpListener;
use std::time::{Duration, Instant};

fn io_timeout(session: &SessionConfig) -> Duration {
    Duration::from_millis(session.timeout_ms)
}

fn sets_of(resolved: &ResolvedExperiment) -> Vec<u8> {
    if resolved.cfg.skip_set2 {
        vec![1]
    } else {
        vec![1, 2]
    }
}

fn accept_with_deadline(listener: &TcpListener, deadline: Instant) -> Result<std::net::TcpStream, WireError> {
    listener
        .set_nonblocking(true)
        .map_err(|e| WireError::Session(format!("listener: {e}")))?;
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream
                    .set_nonblocking(false)
                    .map_err(|e| WireError::Session(format!("socket: {e}")))?;
                return Ok(stream);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(WireError::Timeout { peer: "accept".into() });
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(WireError::Session(format!("accept: {e}"))),
        }
    }
}

/// Runs the physics-engine process: owns psi_true and the resource, serves
/// projective outcomes to Alice and B measurements to Bob.
pub fn run_source(session: &SessionConfig) -> Result<(), WireError> {
    let resolved = session.experiment.resolve()?;
    let hash = session.config_hash();
    let timeout = io_timeout(session);
    let mut log = MessageLog::open(session.outputs.source_log.as_ref())?;

    let listener = bind(&session.endpoints.source)?;
    let deadline = Instant::now() + timeout;
    let mut alice = None;
    let mut bob = None;
    for _ in 0..2 {
        let stream = accept_with_deadline(&listener, deadline)?;
        let mut wire = Wire::new(stream, "party", timeout)?;
        match hello_exchange(&mut wire, Role::Source, hash, false)? {
            Role::Alice if alice.is_none() => alice = Some(wire),
            Role::Bob if bob.is_none() => bob = Some(wire),
            role => {
                wire.send_abort("duplicate-role");
                return Err(WireError::Protocol(format!("duplicate {} connection", role.name())));
            }
        }
    }
    let (mut alice, mut bob) = (alice.unwrap(), bob.unwrap());

    for &k in &resolved.cfg.projector_order {
        for set in sets_of(&resolved) {
            let begin = alice.expect("ROUND_BEGIN")?;
            match begin.payload {
                Payload::RoundBegin { k: bk, set: bset } if bk as usize == k && bset == set => {}
                other => {
                    alice.send_abort("round-mismatch");
                    return Err(WireError::Protocol(format!(
                        "round begin mismatch: got {other:?}, expected k={k} set={set}"
                    )));
                }
            }
            let ctx = RoundContext::prepare(
                &resolved.psi_true,
                &resolved.resource,
                &resolved.cfg,
                set,
                k,
            )
            .map_err(crate::protocol::ProtocolError::from)?;
            let mut rng = resolved.plan.round_rng(k, set);
            let mut successes = 0u64;

            for copy in 0..resolved.plan.n_copies {
                let outcome_i = serve_alice_request(&mut alice, k, copy, &mut || {
                    ctx.draw_outcome_i(&mut rng)
                })?;
                let bit = if set == 1 {
                    outcome_i
                } else {
                    let outcome_a = serve_alice_request(&mut alice, k, copy, &mut || {
                        ctx.draw_outcome_a(&mut rng, outcome_i)
                    })?;
                    outcome_i && outcome_a
                };
                log.record(&LogEvent::PsOutcome { k: k as u32, set, copy, bit: bit.into() });
                if bit {
                    successes += 1;
                    let req = bob.expect("MEAS_REQUEST")?;
                    match req.payload {
                        Payload::MeasRequest { copy_index } if copy_index == copy => {}
                        other => {
                            bob.send_abort("copy-mismatch");
                            return Err(WireError::Protocol(format!(
                                "bob requested {other:?}, expected copy {copy}"
                            )));
                        }
                    }
                    let idx = ctx.draw_b_index(&mut rng) as u16;
                    bob.send(k as u32, Payload::MeasResult { eigenvalue_index: idx })?;
                    log.record(&LogEvent::BobMeasurement {
                        k: k as u32,
                        set,
                        copy,
                        eigenvalue_index: idx,
                    });
                }
            }

            let end = alice.expect("ROUND_END")?;
            match end.payload {
                Payload::RoundEnd { successes: s } if s == successes => {}
                other => {
                    alice.send_abort("success-count-mismatch");
                    return Err(WireError::Protocol(format!(
                        "round end mismatch: {other:?} vs {successes} successes"
                    )));
                }
            }
        }
    }

    // Trigger discipline: after the last round Bob must have nothing in
    // flight; a request for a failed copy would still be sitting here.
    if bob.has_pending_data()? {
        bob.send_abort("unexpected-bob-data");
        return Err(WireError::Protocol("bob sent data after the final round".into()));
    }
    log.flush();
    Ok(())
}

fn serve_alice_request(
    alice: &mut Wire,
    k: usize,
    copy: u64,
    draw: &mut dyn FnMut() -> bool,
) -> Result<bool, WireError> {
    let req = alice.expect("MEAS_REQUEST")?;
    match req.payload {
        Payload::MeasRequest { copy_index } if copy_index == copy => {}
        other => {
            alice.send_abort("copy-mismatch");
            return Err(WireError::Protocol(format!(
                "alice requested {other:?}, expected copy {copy}"
            )));
        }
    }
    let outcome = draw();
    alice.send(k as u32, Payload::MeasResult { eigenvalue_index: outcome.into() })?;
    Ok(outcome)
}

/// Runs Alice: performs the weak coupling and post-selection(s) through the
/// source and feeds the classical channel toward Bob, one bit per copy.
pub fn run_alice(session: &SessionConfig) -> Result<(), WireError> {
    let resolved = session.experiment.resolve()?;
    let hash = session.config_hash();
    let timeout = io_timeout(session);
    let mut log = MessageLog::open(session.outputs.alice_log.as_ref())?;

    let mut source = connect_with_retry(&session.endpoints.source, timeout, timeout, "source")?;
    hello_exchange(&mut source, Role::Alice, hash, true)?;
    let mut bob = connect_with_retry(&session.endpoints.bob, timeout, timeout, "bob")?;
    hello_exchange(&mut bob, Role::Alice, hash, true)?;

    for &k in &resolved.cfg.projector_order {
        for set in sets_of(&resolved) {
            source.send(k as u32, Payload::RoundBegin { k: k as u32, set })?;
            bob.send(k as u32, Payload::RoundBegin { k: k as u32, set })?;
            let mut successes = 0u64;
            for copy in 0..resolved.plan.n_copies {
                let outcome_i = ask_source(&mut source, k, copy)?;
                let bit = if set == 1 {
                    outcome_i
                } else {
                    // The second apparatus fires on every copy, whatever
                    // the first outcome was.
                    let outcome_a = ask_source(&mut source, k, copy)?;
                    outcome_i && outcome_a
                };
                if bit {
                    successes += 1;
                }
                bob.send(k as u32, Payload::PsBit { bit: bit.into() })?;
                log.record(&LogEvent::PsBitSent { k: k as u32, set, copy, bit: bit.into() });
            }
            source.send(k as u32, Payload::RoundEnd { successes })?;
            bob.send(k as u32, Payload::RoundEnd { successes })?;
        }
    }
    log.flush();
    Ok(())
}

fn ask_source(source: &mut Wire, k: usize, copy: u64) -> Result<bool, WireError> {
    source.send(k as u32, Payload::MeasRequest { copy_index: copy })?;
    let frame = source.expect("MEAS_RESULT")?;
    match frame.payload {
        Payload::MeasResult { eigenvalue_index } => Ok(eigenvalue_index == 1),
        _ => unreachable!("expect() returned MEAS_RESULT"),
    }
}

/// Runs Bob: measures B on the copies the classical channel green-lights,
/// inverts each round's statistics into a weak-value quadrature, and writes
/// the reconstruction and the bit ledger.
pub fn run_bob(session: &SessionConfig) -> Result<ReconstructionResult, WireError> {
    let resolved = session.experiment.resolve()?;
    let hash = session.config_hash();
    let timeout = io_timeout(session);
    let mut log = MessageLog::open(session.outputs.bob_log.as_ref())?;

    let listener = bind(&session.endpoints.bob)?;
    let mut source = connect_with_retry(&session.endpoints.source, timeout, timeout, "source")?;
    hello_exchange(&mut source, Role::Bob, hash, true)?;
    let stream = accept_with_deadline(&listener, Instant::now() + timeout)?;
    let mut alice = Wire::new(stream, "alice", timeout)?;
    hello_exchange(&mut alice, Role::Bob, hash, false)?;

    // Bob knows B from the pre-decided config; the sorted spectrum matches
    // the source's sampler by construction.
    let b_eigenvalues = eigh(&resolved.cfg.b_obs)
        .map_err(crate::protocol::ProtocolError::from)?
        .values;

    let accounting = match resolved.mode {
        crate::protocol::RunMode::Sampled { accounting, .. } => accounting,
        _ => unreachable!("session validation enforces sampled mode"),
    };
    let mut ledger = BitLedger::new(accounting);
    let mut records: Vec<WeakValueRecord> = Vec::with_capacity(resolved.cfg.d);
    let mut pending_im: Option<(f64, RoundSample)> = None;

    for &k in &resolved.cfg.projector_order {
        for set in sets_of(&resolved) {
            let begin = alice.expect("ROUND_BEGIN")?;
            match begin.payload {
                Payload::RoundBegin { k: bk, set: bset } if bk as usize == k && bset == set => {}
                other => {
                    alice.send_abort("round-mismatch");
                    return Err(WireError::Protocol(format!("unexpected round begin {other:?}")));
                }
            }
            let mut acc = OutcomeAccumulator::default();
            for copy in 0..resolved.plan.n_copies {
                let frame = alice.expect("PS_BIT")?;
                let bit = match frame.payload {
                    Payload::PsBit { bit } => bit,
                    _ => unreachable!("expect() returned PS_BIT"),
                };
                if bit == 1 {
                    source.send(k as u32, Payload::MeasRequest { copy_index: copy })?;
                    log.record(&LogEvent::MeasRequestSent { k: k as u32, set, copy });
                    let res = source.expect("MEAS_RESULT")?;
                    let idx = match res.payload {
                        Payload::MeasResult { eigenvalue_index } => eigenvalue_index as usize,
                        _ => unreachable!(),
                    };
                    if idx >= b_eigenvalues.len() {
                        source.send_abort("bad-eigenvalue-index");
                        return Err(WireError::Protocol(format!("eigenvalue index {idx} out of range")));
                    }
                    acc.push(b_eigenvalues[idx]);
                }
            }
            let end = alice.expect("ROUND_END")?;
            match end.payload {
                Payload::RoundEnd { successes } if successes == acc.successes => {}
                other => {
                    alice.send_abort("success-count-mismatch");
                    return Err(WireError::Protocol(format!(
                        "round end {other:?} disagrees with {} observed successes",
                        acc.successes
                    )));
                }
            }
            if acc.successes == 0 {
                return Err(WireError::Protocol(format!("no successes in round k={k} set={set}")));
            }
            let sample = RoundSample {
                estimate: acc.mean(),
                std_outcome: acc.std_outcome(),
                successes: acc.successes,
                n_copies: resolved.plan.n_copies,
            };

            // Same inversion pipeline as the in-process sampled mode.
            if set == 1 {
                let im = invert_im(sample.estimate, &resolved.cfg, &resolved.resource)?;
                if resolved.cfg.skip_set2 {
                    records.push(finish_round_set1_only(&resolved, k, im, sample, &mut ledger)?);
                } else {
                    pending_im = Some((im, sample));
                }
            } else {
                let (im, s1) = pending_im.take().expect("set 1 precedes set 2");
                let re = invert_re(sample.estimate, im, &resolved.cfg, &resolved.resource)?;
                let (dw_i, dw_r) = error_propagation(
                    &resolved.cfg,
                    &resolved.resource,
                    s1.successes,
                    sample.successes,
                    s1.std_outcome,
                    sample.std_outcome,
                )
                .map_err(crate::protocol::ProtocolError::from)?;
                let (o1, o2) =
                    round_overlap_contributions(&resolved.cfg, &resolved.resource, &resolved.psi_true, k)
                        .map_err(crate::protocol::ProtocolError::from)?;
                let n = resolved.plan.n_copies as f64;
                ledger.rows.push(RoundBits {
                    k,
                    set: 1,
                    n_copies: s1.n_copies,
                    successes: s1.successes,
                    bits_sent: s1.bits_sent(accounting),
                    c_eq6_contrib: n * o1,
                });
                ledger.rows.push(RoundBits {
                    k,
                    set: 2,
                    n_copies: sample.n_copies,
                    successes: sample.successes,
                    bits_sent: sample.bits_sent(accounting),
                    c_eq6_contrib: n * o2,
                });
                records.push(WeakValueRecord::new(
                    k,
                    crate::qmat::c64(re, im),
                    WeakValueKind::InvertedSampled,
                    Some((dw_r, dw_i)),
                ));
            }
        }
    }

    records.sort_by_key(|r| r.k);
    let (state, overall_factor_magnitude) = reconstruct_state(&records, &resolved.cfg.basis)?;
    let fidelity = state.fidelity(&resolved.psi_true);
    let result = ReconstructionResult {
        weak_values: records,
        state,
        overall_factor_magnitude,
        fidelity_vs_truth: Some(fidelity),
    };

    if let Some(path) = &session.outputs.result_json {
        let file = crate::config::ResultFile {
            config: session.experiment.clone(),
            result: result.to_document(),
        };
        std::fs::write(path, file.to_json_pretty())
            .map_err(|e| WireError::Session(format!("cannot write result: {e}")))?;
    }
    if let Some(path) = &session.outputs.ledger_csv {
        std::fs::write(path, ledger.to_csv())
            .map_err(|e| WireError::Session(format!("cannot write ledger: {e}")))?;
    }
    log.flush();
    Ok(result)
}

fn finish_round_set1_only(
    resolved: &ResolvedExperiment,
    k: usize,
    im: f64,
    s1: RoundSample,
    ledger: &mut BitLedger,
) -> Result<WeakValueRecord, WireError> {
    let accounting = ledger.accounting;
    let im_c = crate::weakcore::im_coefficients(
        &resolved.cfg.a_obs,
        &resolved.cfg.b_obs,
        &resolved.resource,
    )
    .map_err(crate::protocol::ProtocolError::from)?;
    let x_i = 2.0 * resolved.cfg.g * im_c.response;
    let dw_i = (s1.std_outcome / x_i).abs() / (s1.successes as f64).sqrt();
    let (o1, _) = round_overlap_contributions(&resolved.cfg, &resolved.resource, &resolved.psi_true, k)
        .map_err(crate::protocol::ProtocolError::from)?;
    ledger.rows.push(RoundBits {
        k,
        set: 1,
        n_copies: s1.n_copies,
        successes: s1.successes,
        bits_sent: s1.bits_sent(accounting),
        c_eq6_contrib: resolved.plan.n_copies as f64 * o1,
    });
    Ok(WeakValueRecord::new(
        k,
        crate::qmat::c64(0.0, im),
        WeakValueKind::InvertedSampled,
        Some((0.0, dw_i)),
    ))
}
