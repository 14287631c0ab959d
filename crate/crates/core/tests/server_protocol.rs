use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::thread;

use tungstenite::Message;

use singulate::env::EnvConfig;
use singulate::server::{self, ServeOptions, Session, SessionMessage, METRICS_FILE, TRACE_FILE};

const SEED: u64 = 7;
/// Actions the scripted client cycles through after its invalid opener.
const SCRIPT: [usize; 5] = [12, 9, 14, 10, 0];

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/session_seed7.txt")
}

fn env_cfg() -> EnvConfig {
    EnvConfig::default()
}

/// Client lines the script sends, in order, given how many replies so far
/// have not ended the episode.
fn client_line(i: usize) -> String {
    match i {
        0 => r#"{"type":"ActionChoice","u":99}"#.to_string(),
        1 => "not json".to_string(),
        2 => r#"{"type":"EpisodeEnd","terminal":"None","actions":0,"total_reward":0.0}"#.to_string(),
        _ => SessionMessage::ActionChoice { u: SCRIPT[(i - 3) % SCRIPT.len()] }.to_line(),
    }
}

fn spawn_server(out: &Path, max_sessions: usize) -> (u16, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let port = listener.local_addr().unwrap().port();
    let opts = ServeOptions {
        env: env_cfg(),
        seed: SEED,
        out_dir: out.to_path_buf(),
        max_sessions: Some(max_sessions),
    };
    let handle = thread::spawn(move || server::serve(listener, &opts).expect("serve"));
    (port, handle)
}

fn read_text(ws: &mut tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<std::net::TcpStream>>) -> String {
    loop {
        match ws.read().expect("server frame") {
            Message::Text(t) => return t.as_str().to_string(),
            Message::Close(_) => panic!("server closed early"),
            _ => continue,
        }
    }
}

/// Plays the scripted client over a real socket and returns the transcript,
/// client lines prefixed `C `, server lines `S `.
fn play_over_socket(port: u16) -> Vec<String> {
    let (mut ws, _) = tungstenite::connect(format!("ws://127.0.0.1:{port}")).expect("connect");
    let mut transcript = Vec::new();
    for _ in 0..2 {
        transcript.push(format!("S {}", read_text(&mut ws)));
    }
    for i in 0.. {
        let line = client_line(i);
        ws.send(Message::text(line.clone())).expect("send");
        transcript.push(format!("C {line}"));
        let reply = read_text(&mut ws);
        transcript.push(format!("S {reply}"));
        if reply.contains(r#""type":"EpisodeEnd""#) {
            break;
        }
    }
    // The server closes after the episode ends.
    loop {
        match ws.read() {
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        }
    }
    transcript
}

fn play_in_process() -> Vec<String> {
    let mut session = Session::new(&env_cfg(), SEED, 0).expect("session");
    let mut transcript: Vec<String> = session.opening().iter().map(|m| format!("S {}", m.to_line())).collect();
    for i in 0.. {
        let line = client_line(i);
        transcript.push(format!("C {line}"));
        let replies = session.handle_line(&line);
        assert_eq!(replies.len(), 1);
        let done = matches!(replies[0], SessionMessage::EpisodeEnd { .. });
        transcript.push(format!("S {}", replies[0].to_line()));
        if done {
            break;
        }
    }
    transcript
}

#[test]
fn scripted_session_matches_golden_transcript() {
    let out = tempfile::tempdir().unwrap();
    let (port, server) = spawn_server(out.path(), 1);
    let transcript = play_over_socket(port);
    server.join().unwrap();

    assert_eq!(transcript, play_in_process(), "socket and in-process sessions diverge");
    let text = transcript.join("\n") + "\n";
    let golden = golden_path();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &text).unwrap();
    }
    let expected = std::fs::read_to_string(&golden).expect("golden transcript; regenerate with UPDATE_GOLDEN=1");
    assert!(text == expected, "transcript differs from {}", golden.display());

    let metrics = std::fs::read_to_string(out.path().join(METRICS_FILE)).unwrap();
    assert!(metrics.lines().any(|l| l.starts_with("Human,1,")), "{metrics}");
    assert!(out.path().join(TRACE_FILE).is_file());
}

#[test]
fn invalid_input_never_advances_the_episode() {
    let cfg = env_cfg();
    let mut session = Session::new(&cfg, SEED, 0).unwrap();
    let scene = session.scene().clone();
    for line in [
        r#"{"type":"ActionChoice","u":16}"#,
        r#"{"type":"ActionChoice","u":-1}"#,
        r#"{"type":"ActionChoice"}"#,
        r#"{"type":"SessionStart","config_digest":"x","episode":0,"w":8,"n_primitives":2,"t_max":20}"#,
        "",
    ] {
        let replies = session.handle_line(line);
        assert!(matches!(replies.as_slice(), [SessionMessage::Error { .. }]), "{line}: {replies:?}");
        assert_eq!(session.scene(), &scene);
    }
    assert!(session.finished().is_none());
}

#[test]
fn every_state_update_advertises_the_action_count() {
    for extra in [false, true] {
        let cfg = EnvConfig {
            extra_primitive_enabled: extra,
            ..EnvConfig::default()
        };
        let mut session = Session::new(&cfg, SEED, 3).unwrap();
        let mut msgs = session.opening();
        let mut u = 0;
        while session.finished().is_none() {
            msgs.extend(session.handle(SessionMessage::ActionChoice { u }));
            u = (u + 5) % cfg.n_actions();
        }
        for m in &msgs {
            assert!(m.to_line().starts_with(r#"{"type":""#));
            if let SessionMessage::StateUpdate { legal_actions, .. } = m {
                assert_eq!(*legal_actions, cfg.n_actions());
            }
        }
        let after = session.handle(SessionMessage::ActionChoice { u: 0 });
        assert!(matches!(after.as_slice(), [SessionMessage::Error { .. }]));
    }
}

#[test]
fn dropped_connection_records_nothing() {
    let out = tempfile::tempdir().unwrap();
    let (port, server) = spawn_server(out.path(), 1);
    {
        let (mut ws, _) = tungstenite::connect(format!("ws://127.0.0.1:{port}")).expect("connect");
        read_text(&mut ws);
        ws.close(None).unwrap();
        while ws.read().is_ok() {}
    }
    server.join().unwrap();
    assert!(!out.path().join(TRACE_FILE).exists());
    assert!(!out.path().join(METRICS_FILE).exists());
}
