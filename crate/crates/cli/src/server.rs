//! WebSocket relay service. One binary frame per WebSocket message; the
//! first frame on a connection must be a `JoinSession`, which binds the
//! connection to a participant and a pair.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use anyhow::{Context, Result};
use futures_util::{SinkExt, StreamExt};
use lagboard_core::clock::{Clock, ManualClock};
use lagboard_core::orchestrator::{
    export_run, generate_schedule, pair_seed, ExperimentConfig, Outbound, Relay, RelayOptions,
};
use lagboard_core::protocol::{decode, encode, ControlPayload, Envelope, Payload};
use lagboard_core::session::TemplateSet;
use lagboard_core::sim::SimClock;
use lagboard_core::{PairId, ParticipantId};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::time::Instant;
use tokio_tungstenite::tungstenite::Message;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub log_dir: PathBuf,
    pub templates: TemplateSet,
    pub relay: RelayOptions,
    /// Relay time advances in whole ticks instead of following the wall
    /// clock, so every logged delay is an exact multiple of the tick.
    pub virtual_clock: bool,
}

type Outbox = mpsc::UnboundedSender<Envelope>;

struct PairState {
    relay: Relay<SimClock>,
    outboxes: HashMap<ParticipantId, Outbox>,
    /// Bumped per connection so a stale drain loop can tell it was replaced.
    drain_gen: HashMap<ParticipantId, u64>,
    exported: bool,
}

type SharedPair = Arc<Mutex<PairState>>;

/// Source of drain ticks on the relay's tick grid.
#[derive(Clone)]
enum Ticks {
    Real { epoch: Instant, rate: u32 },
    Virtual(watch::Receiver<u64>),
}

struct Service {
    opts: ServeOptions,
    clock: SimClock,
    ticks: Ticks,
    pairs: Mutex<HashMap<PairId, SharedPair>>,
}

fn lock(p: &SharedPair) -> MutexGuard<'_, PairState> {
    p.lock().unwrap_or_else(|e| e.into_inner())
}

fn grid(k: u64, rate: u32) -> Duration {
    Duration::from_nanos((u128::from(k) * 1_000_000_000 / u128::from(rate)) as u64)
}

pub struct Server {
    listener: TcpListener,
    service: Arc<Service>,
}

impl Server {
    pub async fn bind(opts: ServeOptions) -> Result<Self> {
        opts.config.validate()?;
        let listener = TcpListener::bind(opts.addr)
            .await
            .with_context(|| format!("binding {}", opts.addr))?;
        let rate = opts.config.tick_rate;
        let (clock, ticks) = if opts.virtual_clock {
            let manual = ManualClock::new();
            let (tx, rx) = watch::channel(0u64);
            tokio::spawn(virtual_ticker(manual.clone(), rate, tx));
            (SimClock::Virtual(manual), Ticks::Virtual(rx))
        } else {
            let epoch = Instant::now();
            (SimClock::real(), Ticks::Real { epoch, rate })
        };
        Ok(Self {
            listener,
            service: Arc::new(Service {
                opts,
                clock,
                ticks,
                pairs: Mutex::new(HashMap::new()),
            }),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub async fn run(self) -> Result<()> {
        loop {
            let (stream, peer) = self.listener.accept().await?;
            let service = self.service.clone();
            tokio::spawn(async move {
                if let Err(e) = handle_connection(service, stream).await {
                    log::warn!("connection {peer}: {e:#}");
                }
            });
        }
    }
}

/// Advances the shared manual clock one grid step per real tick.
async fn virtual_ticker(clock: ManualClock, rate: u32, tx: watch::Sender<u64>) {
    let start = Instant::now();
    let mut k = 0u64;
    loop {
        k += 1;
        tokio::time::sleep_until(start + grid(k, rate)).await;
        clock.advance_to(grid(k, rate));
        if tx.send(k).is_err() {
            return;
        }
    }
}

impl Service {
    fn pair(&self, id: &PairId) -> Result<SharedPair> {
        let mut pairs = self.pairs.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(p) = pairs.get(id) {
            return Ok(p.clone());
        }
        let cfg = &self.opts.config;
        let schedule = generate_schedule(id.clone(), cfg, pair_seed(self.opts.seed, id))?;
        let relay = Relay::new(
            schedule,
            cfg.clone(),
            self.opts.templates.clone(),
            self.clock.clone(),
            self.opts.relay.clone(),
        )?;
        log::info!("pair {id}: {} conditions scheduled", relay.schedule().len());
        let p = Arc::new(Mutex::new(PairState {
            relay,
            outboxes: HashMap::new(),
            drain_gen: HashMap::new(),
            exported: false,
        }));
        pairs.insert(id.clone(), p.clone());
        Ok(p)
    }

    fn export(&self, state: &mut PairState) {
        let dir = self.opts.log_dir.join(state.relay.pair_id().as_str());
        match export_run(&state.relay.record(), state.relay.log(), &dir) {
            Ok(()) => log::info!("exported {}", dir.display()),
            Err(e) => log::error!("export to {} failed: {e}", dir.display()),
        }
    }

    /// Sends relay output and exports the run once it is finished.
    fn dispatch(&self, state: &mut PairState, out: Vec<Outbound>) {
        for o in out {
            if let Some(tx) = state.outboxes.get(&o.to) {
                let _ = tx.send(o.envelope);
            }
        }
        if state.relay.is_finished() && !state.exported {
            state.exported = true;
            self.export(state);
        }
    }
}

async fn handle_connection(service: Arc<Service>, stream: TcpStream) -> Result<()> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();

    let join = loop {
        match source.next().await {
            Some(Ok(Message::Binary(b))) => break decode(&b)?,
            Some(Ok(Message::Close(_))) | None => return Ok(()),
            Some(Ok(_)) => continue,
            Some(Err(e)) => return Err(e.into()),
        }
    };
    if !matches!(join.payload, Payload::Control(ControlPayload::JoinSession)) {
        anyhow::bail!("first frame from {} is {:?}, not join_session", join.sender, join.msg_type());
    }
    let me = join.sender.clone();
    let shared = service.pair(&join.session)?;

    let (tx, mut rx) = mpsc::unbounded_channel::<Envelope>();
    let writer = tokio::spawn(async move {
        while let Some(env) = rx.recv().await {
            let bytes = match encode(&env) {
                Ok(b) => b,
                Err(e) => {
                    log::error!("encode failed: {e}");
                    continue;
                }
            };
            if sink.send(Message::Binary(bytes.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let joined = {
        let mut st = lock(&shared);
        let previous = st.outboxes.insert(me.clone(), tx.clone());
        match st.relay.ingest(&me, join) {
            Ok(out) => {
                let g = st.drain_gen.entry(me.clone()).or_insert(0);
                *g += 1;
                let g = *g;
                st.exported = st.exported && st.relay.is_finished();
                service.dispatch(&mut st, out);
                Ok(g)
            }
            Err(e) => {
                match previous {
                    Some(p) => st.outboxes.insert(me.clone(), p),
                    None => st.outboxes.remove(&me),
                };
                Err(e)
            }
        }
    };
    let generation = match joined {
        Ok(g) => g,
        Err(e) => {
            drop(tx);
            let _ = writer.await;
            return Err(e.into());
        }
    };
    log::info!("{me} joined {}", lock(&shared).relay.pair_id());
    tokio::spawn(drain_loop(service.clone(), shared.clone(), me.clone(), generation));

    while let Some(msg) = source.next().await {
        let bytes = match msg {
            Ok(Message::Binary(b)) => b,
            Ok(Message::Close(_)) => break,
            Ok(_) => continue,
            Err(e) => {
                log::warn!("{me}: {e}");
                break;
            }
        };
        let env = match decode(&bytes) {
            Ok(env) => env,
            Err(e) => {
                log::warn!("{me}: dropped undecodable frame: {e}");
                continue;
            }
        };
        let mut st = lock(&shared);
        match st.relay.ingest(&me, env) {
            Ok(out) => service.dispatch(&mut st, out),
            Err(e) => log::warn!("{me}: {e}"),
        }
    }

    {
        let mut st = lock(&shared);
        let current = st.outboxes.get(&me).is_some_and(|o| o.same_channel(&tx));
        if current {
            st.outboxes.remove(&me);
            let out = st.relay.disconnect(&me);
            service.dispatch(&mut st, out);
            if st.outboxes.is_empty() && !st.relay.is_finished() {
                service.export(&mut st);
            }
        }
    }
    log::info!("{me} left");
    drop(tx);
    let _ = writer.await;
    Ok(())
}

/// Releases one subscriber's queue on every tick until its connection is
/// replaced or closed.
async fn drain_loop(service: Arc<Service>, shared: SharedPair, me: ParticipantId, generation: u64) {
    let mut ticks = service.ticks.clone();
    let origin = lock(&shared).relay.origin();
    let mut k = 0u64;
    loop {
        match &mut ticks {
            Ticks::Real { epoch, rate } => {
                let now = service.clock.now();
                let elapsed = now.saturating_sub(origin).as_nanos();
                let next = (elapsed * u128::from(*rate) / 1_000_000_000) as u64 + 1;
                k = k.max(next);
                tokio::time::sleep_until(*epoch + origin + grid(k, *rate)).await;
            }
            Ticks::Virtual(rx) => {
                if rx.changed().await.is_err() {
                    return;
                }
            }
        }
        let mut st = lock(&shared);
        if st.drain_gen.get(&me) != Some(&generation) || !st.outboxes.contains_key(&me) {
            return;
        }
        let mut out = st.relay.tick_subscriber(&me);
        out.extend(st.relay.poll_timeout());
        if !out.is_empty() {
            service.dispatch(&mut st, out);
        }
    }
}
