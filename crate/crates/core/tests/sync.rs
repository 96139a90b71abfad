use std::thread;
use std::time::Duration;

use fogbench::sync::{
    inproc_session, ratio_report, FederateClient, FederateId, Kind, Link, Party, RtiServer, SessionLog, SyncMessage,
    TcpLink,
};
use fogbench::Result;

const DT: f64 = 0.05;

fn simulator<L: Link>(mut c: FederateClient<L>, frames: u64, delay: Duration) -> Result<()> {
    for n in 0..frames {
        thread::sleep(delay);
        c.send(&SyncMessage::data(n, DT, vec![n as u8, 1]))?;
        c.send(&SyncMessage::tar(n + 1, DT))?;
        let mut got = Vec::new();
        for _ in 0..2 {
            let m = c.recv()?.expect("session open");
            got.push((m.kind, m.frame));
        }
        got.sort_by_key(|g| g.0 as u8);
        assert!(got.contains(&(Kind::Data, n)) && got.contains(&(Kind::Tag, n + 1)), "{got:?}");
        assert_eq!(c.virtual_now(), (n + 1) as f64 * DT);
    }
    Ok(())
}

fn stack<L: Link>(mut c: FederateClient<L>) -> Result<u64> {
    let mut frames = 0;
    while let Some(m) = c.recv()? {
        assert_eq!(m.kind, Kind::Data);
        let tag = c.recv()?.expect("grant follows data");
        assert_eq!((tag.kind, tag.frame), (Kind::Tag, m.frame + 1));
        c.send(&SyncMessage::data(m.frame, DT, vec![2 * m.frame as u8]))?;
        c.send(&SyncMessage::tar(m.frame + 2, DT))?;
        frames += 1;
    }
    Ok(frames)
}

fn inproc(frames: u64, delay: Duration) -> SessionLog {
    let (sim, ads, rti) = inproc_session(DT).unwrap();
    let ads = thread::spawn(move || stack(ads));
    simulator(sim, frames, delay).unwrap();
    let log = rti.join().unwrap().unwrap();
    assert_eq!(ads.join().unwrap().unwrap(), frames);
    log
}

fn socket(frames: u64) -> SessionLog {
    let server = RtiServer::bind("127.0.0.1:0").unwrap();
    let addr = server.local_addr().unwrap();
    let rti = thread::spawn(move || server.serve(DT));
    let ads = thread::spawn(move || stack(FederateClient::new(FederateId::Ads, TcpLink::connect(addr, FederateId::Ads)?, DT)));
    let sim = FederateClient::new(
        FederateId::Simulator,
        TcpLink::connect(addr, FederateId::Simulator).unwrap(),
        DT,
    );
    simulator(sim, frames, Duration::ZERO).unwrap();
    let log = rti.join().unwrap().unwrap();
    assert_eq!(ads.join().unwrap().unwrap(), frames);
    log
}

#[test]
fn transports_produce_identical_logs() {
    let a = inproc(25, Duration::ZERO);
    let b = socket(25);
    assert_eq!(a.entries, b.entries);
    assert_eq!(a.entries.len(), 25 * 4);
}

#[test]
fn lockstep_alternation_and_monotone_time() {
    let log = inproc(30, Duration::ZERO);
    for (me, other) in [(FederateId::Simulator, Party::Ads), (FederateId::Ads, Party::Simulator)] {
        let mine: Vec<_> = log.entries.iter().filter(|e| e.to == me).collect();
        for w in mine.windows(2) {
            assert!(w[1].time >= w[0].time, "time went back for {me:?}");
        }
        let tags: Vec<usize> = mine
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == Kind::Tag)
            .map(|(i, _)| i)
            .collect();
        for w in tags.windows(2) {
            let data = mine[w[0] + 1..w[1]]
                .iter()
                .filter(|e| e.kind == Kind::Data && e.from == other)
                .count();
            assert_eq!(data, 1, "{me:?} between grants");
        }
    }
}

#[test]
fn slow_renderer_keeps_virtual_ratio() {
    let log = inproc(6, Duration::from_millis(100));
    let r = ratio_report(&log).unwrap();
    assert_eq!(r.r_ads, 1.0);
    assert_eq!(r.frames, 6);
    assert!(r.r_wall < 1.0, "r_wall {}", r.r_wall);
}

#[test]
fn empty_session_has_no_ratio() {
    let log = inproc(0, Duration::ZERO);
    assert!(ratio_report(&log).is_err());
}
