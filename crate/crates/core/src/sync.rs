//! Lockstep time-advance middleware between the simulator and the driving
//! stack.
//!
//! Two federates talk to a run-time infrastructure (RTI) that forwards data
//! and hands out time grants. The simulator publishes frame `n` with a request
//! to advance to `n + 1`; the stack answers with its command and a request for
//! `n + 2`. Neither side ever reads a wall clock: the stack's notion of "now"
//! is whatever the last grant said.
//!
//! Wire format: a little-endian `u32` body length followed by a JSON object
//! `{"kind","frame","time","payload_b64"}`. Before any message each socket
//! client sends one framed `{"join": "simulator" | "ads"}` object.

use std::io::{ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread;
use std::time::Instant;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::worldsim::{
    run_episode, AdsOutput, AdsStack, Driver, Observation, RunStats, ScenarioConfig, SimConfig, TraceFrame,
};
use crate::{Error, Result};

/// Upper bound on a single frame body.
pub const MAX_FRAME_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    Tar,
    Tag,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FederateId {
    Simulator,
    Ads,
}

impl FederateId {
    fn index(self) -> usize {
        match self {
            FederateId::Simulator => 0,
            FederateId::Ads => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncMessage {
    pub kind: Kind,
    pub frame: u64,
    /// Always `frame · dt` for the session's fixed step.
    pub time: f64,
    /// Present only on DATA.
    pub payload: Option<Vec<u8>>,
}

impl SyncMessage {
    pub fn tar(frame: u64, dt: f64) -> Self {
        Self {
            kind: Kind::Tar,
            frame,
            time: frame as f64 * dt,
            payload: None,
        }
    }

    pub fn tag(frame: u64, dt: f64) -> Self {
        Self {
            kind: Kind::Tag,
            ..Self::tar(frame, dt)
        }
    }

    pub fn data(frame: u64, dt: f64, payload: Vec<u8>) -> Self {
        Self {
            kind: Kind::Data,
            payload: Some(payload),
            ..Self::tar(frame, dt)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Wire {
    kind: Kind,
    frame: u64,
    time: f64,
    payload_b64: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Hello {
    join: FederateId,
}

/// JSON body of a message, without the length prefix.
pub fn encode_body(msg: &SyncMessage) -> Result<Vec<u8>> {
    let wire = Wire {
        kind: msg.kind,
        frame: msg.frame,
        time: msg.time,
        payload_b64: msg.payload.as_ref().map(|p| B64.encode(p)),
    };
    Ok(serde_json::to_vec(&wire)?)
}

pub fn decode_body(body: &[u8]) -> Result<SyncMessage> {
    let wire: Wire =
        serde_json::from_slice(body).map_err(|e| Error::protocol(format!("malformed frame: {e}")))?;
    let payload = match wire.payload_b64 {
        Some(s) => Some(
            B64.decode(s.as_bytes())
                .map_err(|e| Error::protocol(format!("bad payload encoding: {e}")))?,
        ),
        None => None,
    };
    if (wire.kind == Kind::Data) != payload.is_some() {
        return Err(Error::protocol(format!("{:?} frame with wrong payload presence", wire.kind)));
    }
    Ok(SyncMessage {
        kind: wire.kind,
        frame: wire.frame,
        time: wire.time,
        payload,
    })
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> Result<()> {
    if body.len() > MAX_FRAME_BYTES {
        return Err(Error::protocol(format!("frame of {} bytes exceeds limit", body.len())));
    }
    w.write_all(&(body.len() as u32).to_le_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame body; `None` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::protocol("stream ended inside a length prefix")),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let n = u32::from_le_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(Error::protocol(format!("frame of {n} bytes exceeds limit")));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)
        .map_err(|_| Error::protocol("stream ended inside a frame body"))?;
    Ok(Some(body))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Data,
    Tar,
    Wait,
}

/// Routing core of the RTI. Pure: feed it messages, get deliveries back.
#[derive(Debug, Clone)]
pub struct Rti {
    dt: f64,
    joined: [bool; 2],
    phase: [Phase; 2],
    last_tar: [Option<u64>; 2],
    /// Frame the simulator publishes next, then the frame last published.
    sim_frame: u64,
    delivered: [f64; 2],
    aborted: bool,
}

impl Rti {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config("session time step must be positive"));
        }
        Ok(Self {
            dt,
            joined: [false; 2],
            phase: [Phase::Data, Phase::Wait],
            last_tar: [None; 2],
            sim_frame: 0,
            delivered: [0.0; 2],
            aborted: false,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn join(&mut self, id: FederateId) -> Result<()> {
        if std::mem::replace(&mut self.joined[id.index()], true) {
            return Err(Error::protocol(format!("{id:?} joined twice")));
        }
        Ok(())
    }

    pub fn started(&self) -> bool {
        self.joined.iter().all(|&j| j)
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    /// Routes one message. Any protocol violation aborts the session.
    pub fn route(&mut self, from: FederateId, msg: SyncMessage) -> Result<Vec<(FederateId, SyncMessage)>> {
        if self.aborted {
            return Err(Error::protocol("session aborted"));
        }
        let r = self.route_inner(from, msg);
        if r.is_err() {
            self.aborted = true;
        }
        r
    }

    fn route_inner(&mut self, from: FederateId, msg: SyncMessage) -> Result<Vec<(FederateId, SyncMessage)>> {
        use FederateId::{Ads, Simulator};
        if !self.started() {
            return Err(Error::protocol(format!("{:?} before session start", msg.kind)));
        }
        if msg.time.to_bits() != (msg.frame as f64 * self.dt).to_bits() {
            return Err(Error::protocol(format!("time {} does not match frame {}", msg.time, msg.frame)));
        }
        if msg.kind == Kind::Tar {
            if let Some(last) = self.last_tar[from.index()] {
                if msg.frame <= last {
                    return Err(Error::protocol(format!(
                        "non-monotonic TAR({}) from {from:?} after TAR({last})",
                        msg.frame
                    )));
                }
            }
        }
        let expect = |phase: Phase, want: Phase| {
            if phase == want {
                Ok(())
            } else {
                Err(Error::protocol(format!("unexpected {:?}({}) from {from:?}", msg.kind, msg.frame)))
            }
        };
        let i = from.index();
        let out = match (from, msg.kind) {
            (_, Kind::Tag) => return Err(Error::protocol("only the RTI grants time")),
            (Simulator, Kind::Data) => {
                expect(self.phase[i], Phase::Data)?;
                if msg.frame != self.sim_frame {
                    return Err(Error::protocol(format!("expected DATA({}) from simulator", self.sim_frame)));
                }
                self.phase[i] = Phase::Tar;
                vec![(Ads, msg)]
            }
            (Simulator, Kind::Tar) => {
                expect(self.phase[i], Phase::Tar)?;
                if msg.frame != self.sim_frame + 1 {
                    return Err(Error::protocol(format!("expected TAR({}) from simulator", self.sim_frame + 1)));
                }
                self.last_tar[i] = Some(msg.frame);
                self.phase = [Phase::Wait, Phase::Data];
                vec![(Ads, SyncMessage::tag(msg.frame, self.dt))]
            }
            (Ads, Kind::Data) => {
                expect(self.phase[i], Phase::Data)?;
                if msg.frame != self.sim_frame {
                    return Err(Error::protocol(format!("expected DATA({}) from ads", self.sim_frame)));
                }
                self.phase[i] = Phase::Tar;
                vec![(Simulator, msg)]
            }
            (Ads, Kind::Tar) => {
                expect(self.phase[i], Phase::Tar)?;
                if msg.frame != self.sim_frame + 2 {
                    return Err(Error::protocol(format!("expected TAR({}) from ads", self.sim_frame + 2)));
                }
                self.last_tar[i] = Some(msg.frame);
                self.phase = [Phase::Data, Phase::Wait];
                self.sim_frame += 1;
                vec![(Simulator, SyncMessage::tag(msg.frame - 1, self.dt))]
            }
        };
        for (to, m) in &out {
            let last = &mut self.delivered[to.index()];
            if m.time < *last {
                return Err(Error::protocol("delivery would move time backwards"));
            }
            *last = m.time;
        }
        Ok(out)
    }
}

/// A federate's view of virtual time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FederateClock {
    dt: f64,
    now: f64,
    granted_until: f64,
}

impl FederateClock {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            now: 0.0,
            granted_until: 0.0,
        }
    }

    pub fn granted_until(&self) -> f64 {
        self.granted_until
    }

    /// Applies TAG(`frame`).
    pub fn grant(&mut self, frame: u64) -> Result<()> {
        let t = frame as f64 * self.dt;
        if t < self.granted_until {
            return Err(Error::protocol(format!("grant to {t} s after {} s", self.granted_until)));
        }
        self.granted_until = t;
        self.now = t;
        Ok(())
    }
}

/// Current virtual time; 0 before the first grant.
pub fn virtual_now(clock: &FederateClock) -> f64 {
    clock.now
}

/// Federate side of a transport.
pub trait Link: Send {
    fn send(&mut self, msg: &SyncMessage) -> Result<()>;
    /// `None` once the RTI has closed the session.
    fn recv(&mut self) -> Result<Option<SyncMessage>>;
}

enum Event {
    Message(SyncMessage),
    Invalid(String),
    Closed,
}

type Mailbox = Sender<(FederateId, Event)>;

/// In-process transport.
pub struct ChannelLink {
    id: FederateId,
    tx: Mailbox,
    rx: Receiver<SyncMessage>,
}

impl Link for ChannelLink {
    fn send(&mut self, msg: &SyncMessage) -> Result<()> {
        self.tx
            .send((self.id, Event::Message(msg.clone())))
            .map_err(|_| Error::protocol("RTI has shut down"))
    }

    fn recv(&mut self) -> Result<Option<SyncMessage>> {
        Ok(self.rx.recv().ok())
    }
}

impl Drop for ChannelLink {
    fn drop(&mut self) {
        let _ = self.tx.send((self.id, Event::Closed));
    }
}

/// Stream-socket transport.
pub struct TcpLink {
    stream: TcpStream,
}

impl TcpLink {
    pub fn connect<A: ToSocketAddrs>(addr: A, id: FederateId) -> Result<Self> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        write_frame(&mut stream, &serde_json::to_vec(&Hello { join: id })?)?;
        Ok(Self { stream })
    }
}

impl Link for TcpLink {
    fn send(&mut self, msg: &SyncMessage) -> Result<()> {
        write_frame(&mut self.stream, &encode_body(msg)?)
    }

    fn recv(&mut self) -> Result<Option<SyncMessage>> {
        match read_frame(&mut self.stream)? {
            Some(body) => decode_body(&body).map(Some),
            None => Ok(None),
        }
    }
}

/// Federate handle: a link plus the clock it advances.
pub struct FederateClient<L: Link> {
    pub id: FederateId,
    link: L,
    clock: FederateClock,
}

impl<L: Link> FederateClient<L> {
    pub fn new(id: FederateId, link: L, dt: f64) -> Self {
        Self {
            id,
            link,
            clock: FederateClock::new(dt),
        }
    }

    pub fn dt(&self) -> f64 {
        self.clock.dt
    }

    pub fn clock(&self) -> &FederateClock {
        &self.clock
    }

    pub fn virtual_now(&self) -> f64 {
        virtual_now(&self.clock)
    }

    pub fn send(&mut self, msg: &SyncMessage) -> Result<()> {
        self.link.send(msg)
    }

    pub fn recv(&mut self) -> Result<Option<SyncMessage>> {
        let msg = self.link.recv()?;
        if let Some(m) = &msg {
            if m.kind == Kind::Tag {
                self.clock.grant(m.frame)?;
            }
        }
        Ok(msg)
    }

    fn expect(&mut self, kind: Kind, frame: u64) -> Result<SyncMessage> {
        match self.recv()? {
            Some(m) if m.kind == kind && m.frame == frame => Ok(m),
            Some(m) => Err(Error::protocol(format!(
                "{:?} expected {kind:?}({frame}), got {:?}({})",
                self.id, m.kind, m.frame
            ))),
            None => Err(Error::protocol("session closed")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Simulator,
    Ads,
    Rti,
}

impl From<FederateId> for Party {
    fn from(id: FederateId) -> Self {
        match id {
            FederateId::Simulator => Party::Simulator,
            FederateId::Ads => Party::Ads,
        }
    }
}

/// One delivered message. Payloads are summarised by size and digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub from: Party,
    pub to: FederateId,
    pub kind: Kind,
    pub frame: u64,
    pub time: f64,
    pub payload_bytes: usize,
    pub payload_sha256: Option<String>,
}

/// Wall-clock receive time of entry `seq`, seconds since session start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallEntry {
    pub seq: u64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    pub entries: Vec<LogEntry>,
    pub wall: Vec<WallEntry>,
}

impl SessionLog {
    fn push(&mut self, from: Party, to: FederateId, msg: &SyncMessage, wall_s: f64) {
        let seq = self.entries.len() as u64;
        self.entries.push(LogEntry {
            seq,
            from,
            to,
            kind: msg.kind,
            frame: msg.frame,
            time: msg.time,
            payload_bytes: msg.payload.as_ref().map_or(0, Vec::len),
            payload_sha256: msg.payload.as_ref().map(|p| hex::encode(Sha256::digest(p))),
        });
        self.wall.push(WallEntry { seq, wall_s });
    }

    /// Routed messages as JSONL. Contains no wall-clock data.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_wall_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.wall {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, log: &Path, wall: &Path) -> Result<()> {
        self.write_jsonl(std::io::BufWriter::new(std::fs::File::create(log)?))?;
        self.write_wall_jsonl(std::io::BufWriter::new(std::fs::File::create(wall)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub frames: u64,
    /// Simulator virtual time over stack virtual time.
    pub r_ads: f64,
    /// Simulator virtual time over elapsed wall time. Diagnostic only.
    pub r_wall: f64,
}

pub fn ratio_report(log: &SessionLog) -> Result<RatioReport> {
    let last_grant = |to: FederateId| {
        log.entries
            .iter()
            .rev()
            .find(|e| e.kind == Kind::Tag && e.to == to)
            .map(|e| (e.frame, e.time))
    };
    let (Some((frames, t_sim)), Some((_, t_ads))) = (last_grant(FederateId::Simulator), last_grant(FederateId::Ads))
    else {
        return Err(Error::input("session completed no frames"));
    };
    let t_wall = log.wall.last().map_or(0.0, |w| w.wall_s);
    Ok(RatioReport {
        frames,
        r_ads: t_sim / t_ads,
        r_wall: if t_wall > 0.0 { t_sim / t_wall } else { f64::INFINITY },
    })
}

/// Smallest lag `k` at which every issued command reappears as the applied
/// command `k` frames later. Needs at least one non-default command.
pub fn feedback_shift(trace: &[TraceFrame], max_lag: usize) -> Option<usize> {
    (0..=max_lag).find(|&k| {
        let pairs: Vec<_> = trace.iter().zip(trace.iter().skip(k)).collect();
        !pairs.is_empty()
            && pairs.iter().any(|(a, _)| a.command != Default::default())
            && pairs.iter().all(|(a, b)| b.applied == a.command)
    })
}

enum Outlet {
    Channel(Option<Sender<SyncMessage>>),
    Tcp(TcpStream),
}

impl Outlet {
    fn deliver(&mut self, msg: &SyncMessage) -> Result<()> {
        match self {
            Outlet::Channel(Some(tx)) => tx.send(msg.clone()).map_err(|_| Error::protocol("federate has left")),
            Outlet::Channel(None) => Err(Error::protocol("federate has left")),
            Outlet::Tcp(s) => write_frame(s, &encode_body(msg)?),
        }
    }

    fn close(&mut self) {
        match self {
            Outlet::Channel(tx) => *tx = None,
            Outlet::Tcp(s) => {
                let _ = s.shutdown(Shutdown::Write);
            }
        }
    }
}

/// The RTI event loop. Ends when either federate leaves; all outlets are
/// closed on exit so the remaining federate sees the end of the session.
fn serve(mut rti: Rti, inbox: Receiver<(FederateId, Event)>, mut outlets: [Outlet; 2]) -> Result<SessionLog> {
    let start = Instant::now();
    let mut log = SessionLog::default();
    let result = loop {
        let Ok((from, ev)) = inbox.recv() else {
            break Ok(());
        };
        let msg = match ev {
            Event::Message(m) => m,
            Event::Closed => break Ok(()),
            Event::Invalid(e) => break Err(Error::Protocol(e)),
        };
        let wall = start.elapsed().as_secs_f64();
        let origin = match msg.kind {
            Kind::Data => Party::from(from),
            _ => Party::Rti,
        };
        match rti.route(from, msg) {
            Ok(out) => {
                if let Err(e) = out.iter().try_for_each(|(to, m)| {
                    log.push(origin, *to, m, wall);
                    outlets[to.index()].deliver(m)
                }) {
                    break Err(e);
                }
            }
            Err(e) => break Err(e),
        }
    };
    for o in &mut outlets {
        o.close();
    }
    result.map(|_| log)
}

/// In-process session: returns both federate clients and the RTI thread.
pub fn inproc_session(
    dt: f64,
) -> Result<(
    FederateClient<ChannelLink>,
    FederateClient<ChannelLink>,
    thread::JoinHandle<Result<SessionLog>>,
)> {
    let mut rti = Rti::new(dt)?;
    rti.join(FederateId::Simulator)?;
    rti.join(FederateId::Ads)?;
    let (mail_tx, mail_rx) = mpsc::channel();
    let (sim_tx, sim_rx) = mpsc::channel();
    let (ads_tx, ads_rx) = mpsc::channel();
    let handle = thread::spawn(move || {
        serve(rti, mail_rx, [Outlet::Channel(Some(sim_tx)), Outlet::Channel(Some(ads_tx))])
    });
    let link = |id, rx| ChannelLink {
        id,
        tx: mail_tx.clone(),
        rx,
    };
    Ok((
        FederateClient::new(FederateId::Simulator, link(FederateId::Simulator, sim_rx), dt),
        FederateClient::new(FederateId::Ads, link(FederateId::Ads, ads_rx), dt),
        handle,
    ))
}

/// Socket listener for the RTI.
pub struct RtiServer {
    listener: TcpListener,
}

impl RtiServer {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts one simulator and one stack connection, then runs the session.
    pub fn serve(self, dt: f64) -> Result<SessionLog> {
        let mut rti = Rti::new(dt)?;
        let mut streams: [Option<TcpStream>; 2] = [None, None];
        while !rti.started() {
            let (mut s, _) = self.listener.accept()?;
            s.set_nodelay(true)?;
            let body = read_frame(&mut s)?.ok_or_else(|| Error::protocol("connection closed before joining"))?;
            let hello: Hello =
                serde_json::from_slice(&body).map_err(|e| Error::protocol(format!("bad join frame: {e}")))?;
            rti.join(hello.join)?;
            streams[hello.join.index()] = Some(s);
        }
        let [Some(sim), Some(ads)] = streams else {
            unreachable!("both federates joined");
        };
        let (mail_tx, mail_rx) = mpsc::channel();
        for (id, s) in [(FederateId::Simulator, &sim), (FederateId::Ads, &ads)] {
            let mut reader = s.try_clone()?;
            let tx = mail_tx.clone();
            thread::spawn(move || loop {
                let ev = match read_frame(&mut reader).and_then(|b| b.map(|b| decode_body(&b)).transpose()) {
                    Ok(Some(m)) => Event::Message(m),
                    Ok(None) => Event::Closed,
                    Err(e) => Event::Invalid(e.to_string()),
                };
                let last = !matches!(ev, Event::Message(_));
                if tx.send((id, ev)).is_err() || last {
                    break;
                }
            });
        }
        drop(mail_tx);
        serve(rti, mail_rx, [Outlet::Tcp(sim), Outlet::Tcp(ads)])
    }
}

/// Simulator-side driver that reaches the stack through the RTI.
pub struct LockstepDriver<L: Link> {
    pub client: FederateClient<L>,
}

impl<L: Link> Driver for LockstepDriver<L> {
    fn drive(&mut self, obs: &Observation) -> Result<AdsOutput> {
        let n = obs.frame;
        let dt = self.client.dt();
        self.client.send(&SyncMessage::data(n, dt, serde_json::to_vec(obs)?))?;
        self.client.send(&SyncMessage::tar(n + 1, dt))?;
        let ctl = self.client.expect(Kind::Data, n)?;
        let out: AdsOutput = serde_json::from_slice(ctl.payload.as_deref().unwrap_or_default())?;
        self.client.expect(Kind::Tag, n + 1)?;
        Ok(out)
    }
}

/// The stack as a federate. Reads time only through its clock. Returns the
/// number of frames handled once the session closes.
pub fn run_ads_federate<L: Link>(mut client: FederateClient<L>, mut stack: AdsStack) -> Result<u64> {
    let dt = client.dt();
    let mut frames = 0;
    loop {
        let Some(msg) = client.recv()? else {
            return Ok(frames);
        };
        if msg.kind != Kind::Data {
            return Err(Error::protocol(format!("ads expected DATA, got {:?}", msg.kind)));
        }
        let obs: Observation = serde_json::from_slice(msg.payload.as_deref().unwrap_or_default())?;
        client.expect(Kind::Tag, msg.frame + 1)?;
        let out = stack.process(&obs, client.virtual_now());
        client.send(&SyncMessage::data(msg.frame, dt, serde_json::to_vec(&out)?))?;
        client.send(&SyncMessage::tar(msg.frame + 2, dt))?;
        frames += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Inproc,
    Socket,
}

/// Runs an episode with the stack behind the RTI.
pub fn run_synced(scenario: &ScenarioConfig, cfg: &SimConfig, transport: Transport) -> Result<(RunStats, SessionLog)> {
    let stack = AdsStack::new(scenario, cfg)?;
    let dt = cfg.dt;
    let (stats, rti, ads) = match transport {
        Transport::Inproc => {
            let (sim, ads_client, rti) = inproc_session(dt)?;
            let ads = thread::spawn(move || run_ads_federate(ads_client, stack));
            let mut driver = LockstepDriver { client: sim };
            let stats = run_episode(scenario, cfg, &mut driver);
            drop(driver);
            (stats, rti, ads)
        }
        Transport::Socket => {
            let server = RtiServer::bind("127.0.0.1:0")?;
            let addr = server.local_addr()?;
            let rti = thread::spawn(move || server.serve(dt));
            let ads = thread::spawn(move || {
                let link = TcpLink::connect(addr, FederateId::Ads)?;
                run_ads_federate(FederateClient::new(FederateId::Ads, link, dt), stack)
            });
            let link = TcpLink::connect(addr, FederateId::Simulator)?;
            let mut driver = LockstepDriver {
                client: FederateClient::new(FederateId::Simulator, link, dt),
            };
            let stats = run_episode(scenario, cfg, &mut driver);
            drop(driver);
            (stats, rti, ads)
        }
    };
    let log = rti.join().map_err(|_| Error::protocol("RTI thread panicked"))?;
    let ads = ads.join().map_err(|_| Error::protocol("stack federate panicked"))?;
    let stats = stats?;
    let log = log?;
    ads?;
    Ok((stats, log))
}
