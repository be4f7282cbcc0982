//! Presence emitter: forwards loop presence edges to a signal controller
//! over TCP and keeps the link alive with heartbeats.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use xroads_core::protocol::{encode_wire, PresenceMessage, WireMessage};

pub const HEARTBEAT_INTERVAL: Duration = Duration::from_secs(1);
pub const RECONNECT_DELAY: Duration = Duration::from_millis(500);
const CONNECT_TIMEOUT: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TscLink {
    Disabled,
    Connecting,
    Connected,
    Disconnected,
}

impl TscLink {
    fn from_u8(v: u8) -> Self {
        match v {
            1 => TscLink::Connecting,
            2 => TscLink::Connected,
            3 => TscLink::Disconnected,
            _ => TscLink::Disabled,
        }
    }
}

/// Shared, lock-free view of the link state.
#[derive(Debug, Default)]
pub struct LinkState(AtomicU8);

impl LinkState {
    pub fn get(&self) -> TscLink {
        TscLink::from_u8(self.0.load(Ordering::Relaxed))
    }

    fn set(&self, l: TscLink) {
        self.0.store(l as u8, Ordering::Relaxed);
    }
}

pub fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

pub struct PresenceEmitter {
    tx: Option<mpsc::Sender<PresenceMessage>>,
    thread: Option<JoinHandle<()>>,
}

impl PresenceEmitter {
    /// Starts the sender thread for `addr` (`host:port`, optionally with a
    /// `tcp://` prefix) and returns once the first connection attempt has
    /// succeeded or failed.
    pub fn spawn(addr: &str, link: Arc<LinkState>) -> Self {
        let addr = addr.strip_prefix("tcp://").unwrap_or(addr).to_string();
        let (tx, rx) = mpsc::channel::<PresenceMessage>();
        let (ready_tx, ready_rx) = mpsc::sync_channel::<()>(1);
        link.set(TscLink::Connecting);
        let thread = thread::spawn(move || run(&addr, &rx, &link, ready_tx));
        let _ = ready_rx.recv_timeout(CONNECT_TIMEOUT * 2);
        Self { tx: Some(tx), thread: Some(thread) }
    }

    pub fn send(&self, m: PresenceMessage) {
        if let Some(tx) = &self.tx {
            let _ = tx.send(m);
        }
    }
}

impl Drop for PresenceEmitter {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn connect(addr: &str) -> Option<TcpStream> {
    let sa = addr.to_socket_addrs().ok()?.next()?;
    let s = TcpStream::connect_timeout(&sa, CONNECT_TIMEOUT).ok()?;
    let _ = s.set_nodelay(true);
    Some(s)
}

fn run(addr: &str, rx: &mpsc::Receiver<PresenceMessage>, link: &LinkState, ready: mpsc::SyncSender<()>) {
    // Latest level per loop; replayed after a reconnect so the controller
    // never keeps a stale level.
    let mut levels: BTreeMap<String, PresenceMessage> = BTreeMap::new();
    let mut conn: Option<TcpStream> = None;
    let mut last_attempt: Option<Instant> = None;
    let mut last_sent = Instant::now();
    loop {
        if conn.is_none() && last_attempt.map_or(true, |t| t.elapsed() >= RECONNECT_DELAY) {
            last_attempt = Some(Instant::now());
            conn = connect(addr);
            match &mut conn {
                Some(s) => {
                    let replay: Vec<u8> = levels
                        .values()
                        .flat_map(|m| encode_wire(&WireMessage::Presence(m.clone())))
                        .collect();
                    if s.write_all(&replay).is_ok() {
                        link.set(TscLink::Connected);
                        last_sent = Instant::now();
                    } else {
                        conn = None;
                        link.set(TscLink::Disconnected);
                    }
                }
                None => link.set(TscLink::Disconnected),
            }
            let _ = ready.try_send(());
        }
        let wait = HEARTBEAT_INTERVAL.saturating_sub(last_sent.elapsed());
        let wait = if conn.is_none() { wait.min(RECONNECT_DELAY) } else { wait };
        let msg = match rx.recv_timeout(wait) {
            Ok(m) => {
                levels.insert(m.loop_id.clone(), m.clone());
                Some(WireMessage::Presence(m))
            }
            Err(RecvTimeoutError::Timeout) => {
                (last_sent.elapsed() >= HEARTBEAT_INTERVAL).then(|| WireMessage::Heartbeat { ts_ms: now_ms() })
            }
            Err(RecvTimeoutError::Disconnected) => return,
        };
        if let (Some(m), Some(s)) = (msg, &mut conn) {
            if s.write_all(&encode_wire(&m)).is_ok() {
                last_sent = Instant::now();
            } else {
                conn = None;
                link.set(TscLink::Disconnected);
            }
        }
    }
}
