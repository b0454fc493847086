//! A scripted bot speaking to the relay service over WebSocket.

use std::time::Duration;

use anyhow::{bail, Result};
use futures_util::{SinkExt, StreamExt};
use lagboard_core::clock::{Clock, SystemClock};
use lagboard_core::protocol::{decode, encode, Envelope};
use lagboard_core::session::TemplateSet;
use lagboard_core::sim::{Bot, BotScript};
use lagboard_core::PairId;
use tokio::time::Instant;
use tokio_tungstenite::tungstenite::Message;

/// Connects, joins `pair` and plays until the relay reports the session
/// complete. Returns the bot with its received verdicts.
pub async fn run_bot(url: &str, pair: PairId, script: BotScript, templates: TemplateSet) -> Result<Bot> {
    let (ws, _) = tokio_tungstenite::connect_async(url).await?;
    let (mut sink, mut source) = ws.split();
    let clock = SystemClock::new();
    let epoch = Instant::now();
    let mut bot = Bot::new(script, pair, templates);

    let mut outgoing = bot.join(clock.now());
    loop {
        for env in outgoing.drain(..) {
            send(&mut sink, &env).await?;
        }
        if bot.is_finished() {
            break;
        }
        let wake = bot.next_wakeup().unwrap_or(clock.now() + Duration::from_secs(3600));
        tokio::select! {
            msg = source.next() => match msg {
                Some(Ok(Message::Binary(b))) => {
                    let env = decode(&b)?;
                    outgoing = bot.on_message(&env, clock.now());
                }
                Some(Ok(Message::Close(_))) | None => bail!("relay closed the connection"),
                Some(Ok(_)) => {}
                Some(Err(e)) => return Err(e.into()),
            },
            _ = tokio::time::sleep_until(epoch + wake) => {
                outgoing = bot.on_timer(clock.now());
            }
        }
    }
    let _ = sink.close().await;
    Ok(bot)
}

async fn send<S>(sink: &mut S, env: &Envelope) -> Result<()>
where
    S: SinkExt<Message> + Unpin,
    S::Error: std::error::Error + Send + Sync + 'static,
{
    sink.send(Message::Binary(encode(env)?.into())).await?;
    Ok(())
}
