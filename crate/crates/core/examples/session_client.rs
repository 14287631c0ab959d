//! A scripted console stand-in: connects to `singulate serve`, prints every
//! server message and answers each state with a random legal action.
//!
//! `cargo run --bin singulate -- serve --port 8765 &`
//! `cargo run --example session_client -- ws://127.0.0.1:8765 [seed]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tungstenite::Message;

use singulate::server::SessionMessage;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let url = args.next().unwrap_or_else(|| "ws://127.0.0.1:8765".into());
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (mut ws, _) = tungstenite::connect(url.as_str())?;
    loop {
        let text = match ws.read()? {
            Message::Text(t) => t.as_str().to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        match serde_json::from_str::<SessionMessage>(&text)? {
            SessionMessage::StateUpdate { legal_actions, t, min_dist, .. } => {
                let u = rng.gen_range(0..legal_actions);
                println!("t = {t}, clearance {min_dist:?}: choosing {u}");
                ws.send(Message::text(SessionMessage::ActionChoice { u }.to_line()))?;
            }
            SessionMessage::EpisodeEnd { terminal, actions, total_reward } => {
                println!("episode over: {terminal:?} after {actions} actions, return {total_reward}");
            }
            other => println!("{}", other.to_line()),
        }
    }
    Ok(())
}
