use std::sync::{Arc, OnceLock};

use keyauth_client::{paths, CapturingTransport, ClientError, HttpTransport, KeyAuthClient, Transport};
use keyauth_core::crypto::{generate_keypair, KeyPair};
use keyauth_core::protocol::{
    AuthSubmission, ChallengeReply, ChallengeRequest, ErrorCode, PollRequest, PollStatus,
    RegisterRequest, VerifyRequest,
};
use keyauth_core::token::verify_token;
use keyauth_core::{build_signing_payload, decode_message, Identifier, Message};
use keyauth_server::{KeyAuthService, RegistrationMode, ServerConfig, ServerHandle};
use serde_json::{json, Value};
use tempfile::TempDir;

fn user_key() -> &'static KeyPair {
    static KEY: OnceLock<KeyPair> = OnceLock::new();
    KEY.get_or_init(|| generate_keypair(2048).unwrap())
}

fn server_pem() -> &'static [u8] {
    static PEM: OnceLock<Vec<u8>> = OnceLock::new();
    PEM.get_or_init(|| generate_keypair(2048).unwrap().private_key().to_pkcs8_pem().to_vec())
}

struct Daemon {
    handle: ServerHandle,
    _dirs: (TempDir, TempDir),
}

fn daemon(edit: impl FnOnce(&mut ServerConfig)) -> Daemon {
    daemon_with_clock(edit, Arc::new(keyauth_server::SystemClock))
}

fn daemon_with_clock(edit: impl FnOnce(&mut ServerConfig), clock: Arc<dyn keyauth_server::Clock>) -> Daemon {
    let data = tempfile::tempdir().unwrap();
    let keys = tempfile::tempdir().unwrap();
    let key_path = keys.path().join("server-key.pem");
    std::fs::write(&key_path, server_pem()).unwrap();
    let mut config = ServerConfig {
        listen_address: "127.0.0.1:0".parse().unwrap(),
        data_dir: data.path().to_owned(),
        challenge_ttl: 120,
        token_ttl: 900,
        registration_mode: RegistrationMode::Open,
        registration_token: None,
        server_key_path: key_path,
        server_key_bits: 2048,
        challenge_rate_limit: 0,
    };
    edit(&mut config);
    let addr = config.listen_address;
    let service = Arc::new(KeyAuthService::with_clock(config, clock).unwrap());
    Daemon { handle: ServerHandle::start(service, addr).unwrap(), _dirs: (data, keys) }
}

fn id(s: &str) -> Identifier {
    Identifier::new(s).unwrap()
}

fn register(client: &KeyAuthClient<impl Transport>, user: &str) {
    client
        .register(RegisterRequest {
            user_id: id(user),
            public_key_pem: user_key().public_key().to_pem(),
            registration_token: None,
        })
        .unwrap();
}

fn sign(reply: &ChallengeReply, user: &str, service: &str) -> AuthSubmission {
    let payload = build_signing_payload(&reply.challenge_id, &reply.nonce, service, user).unwrap();
    AuthSubmission {
        challenge_id: reply.challenge_id,
        fingerprint: user_key().public_key().fingerprint(),
        signature: user_key().private_key().sign(payload.as_bytes()).unwrap(),
    }
}

fn raw_post(d: &Daemon, path: &str, body: &str) -> (u16, Message) {
    let t = HttpTransport::new(&d.handle.url()).unwrap();
    let reply = t.post(path, body.as_bytes().to_vec()).unwrap();
    (reply.status, decode_message(&reply.body).unwrap())
}

fn expect_error(d: &Daemon, path: &str, body: &str, code: ErrorCode, status: u16) {
    let (got_status, message) = raw_post(d, path, body);
    match message {
        Message::Error(e) => assert_eq!(e.code, code, "{body}"),
        other => panic!("expected error, got {other:?}"),
    }
    assert_eq!(got_status, status, "{body}");
}

#[test]
fn full_flow_over_http() {
    let d = daemon(|_| {});
    let client = KeyAuthClient::new(&d.handle.url()).unwrap();
    register(&client, "alice");
    let reply = client.challenge(ChallengeRequest { user_id: id("alice"), service_id: id("mail") }).unwrap();
    let token = client.authenticate(sign(&reply, "alice", "mail")).unwrap().token;

    let server_key = client.server_key().unwrap();
    assert!(verify_token(&server_key, &token, keyauth_core::unix_now()).is_ok());
    let verified = client.verify(VerifyRequest { token: token.clone() }).unwrap();
    assert!(verified.valid);
    assert_eq!(verified.service_id, Some(id("mail")));

    let poll = client
        .poll(PollRequest { challenge_id: reply.challenge_id, poll_secret: reply.poll_secret })
        .unwrap();
    assert_eq!(poll.status, PollStatus::Completed);
    assert_eq!(poll.token, Some(token));
}

#[test]
fn every_request_uses_its_own_connection() {
    let d = daemon(|_| {});
    let client = KeyAuthClient::new(&d.handle.url()).unwrap();
    let before = d.handle.connections_accepted();
    register(&client, "alice");
    let reply = client.challenge(ChallengeRequest { user_id: id("alice"), service_id: id("mail") }).unwrap();
    client.authenticate(sign(&reply, "alice", "mail")).unwrap();
    client.server_key_pem().unwrap();
    assert_eq!(d.handle.connections_accepted() - before, 4);
}

#[test]
fn error_statuses() {
    let d = daemon(|_| {});
    let client = KeyAuthClient::new(&d.handle.url()).unwrap();
    register(&client, "alice");

    expect_error(&d, paths::CHALLENGE, "{nope", ErrorCode::MalformedJson, 400);
    expect_error(
        &d,
        paths::CHALLENGE,
        r#"{"v":"keyauth-2","type":"challenge-request","body":{"user_id":"alice","service_id":"mail"}}"#,
        ErrorCode::UnknownVersion,
        400,
    );
    expect_error(&d, paths::CHALLENGE, r#"{"v":"keyauth-1","type":"hi","body":{}}"#, ErrorCode::UnknownType, 400);
    expect_error(
        &d,
        paths::CHALLENGE,
        r#"{"v":"keyauth-1","type":"challenge-request","body":{"user_id":"al ice","service_id":"mail"}}"#,
        ErrorCode::IdFormat,
        400,
    );
    // Right message, wrong endpoint.
    expect_error(
        &d,
        paths::POLL,
        r#"{"v":"keyauth-1","type":"challenge-request","body":{"user_id":"alice","service_id":"mail"}}"#,
        ErrorCode::SchemaViolation,
        400,
    );
    expect_error(
        &d,
        paths::CHALLENGE,
        r#"{"v":"keyauth-1","type":"challenge-request","body":{"user_id":"bob","service_id":"mail"}}"#,
        ErrorCode::UnknownUser,
        404,
    );

    let reply = client.challenge(ChallengeRequest { user_id: id("alice"), service_id: id("mail") }).unwrap();
    let sub = sign(&reply, "alice", "mail");
    client.authenticate(sub.clone()).unwrap();
    let err = client.authenticate(sub).unwrap_err();
    assert_eq!(err.code(), Some(ErrorCode::AlreadyConsumed));

    let mut bad = sign(&reply, "alice", "mail");
    bad.challenge_id = keyauth_core::ChallengeId::random();
    expect_error(
        &d,
        paths::AUTHENTICATE,
        &String::from_utf8(keyauth_core::encode_message(&bad.into())).unwrap(),
        ErrorCode::UnknownChallenge,
        404,
    );

    let wrong = PollRequest { challenge_id: reply.challenge_id, poll_secret: keyauth_core::PollSecret::random() };
    expect_error(
        &d,
        paths::POLL,
        &String::from_utf8(keyauth_core::encode_message(&wrong.into())).unwrap(),
        ErrorCode::Unauthorized,
        401,
    );
}

#[test]
fn reply_bodies_use_exact_field_names() {
    let d = daemon(|_| {});
    let client = KeyAuthClient::with_transport(CapturingTransport::new(HttpTransport::new(&d.handle.url()).unwrap()));
    register(&client, "alice");
    client.challenge(ChallengeRequest { user_id: id("alice"), service_id: id("mail") }).unwrap();

    let exchanges = client.transport().exchanges();
    let reply: Value = serde_json::from_slice(&exchanges[1].reply.as_ref().unwrap().body).unwrap();
    assert_eq!(reply["v"], "keyauth-1");
    assert_eq!(reply["type"], "challenge-reply");
    let mut keys: Vec<_> = reply["body"].as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["challenge_id", "expires_at", "nonce", "poll_secret"]);
    assert!(reply["body"]["expires_at"].is_u64());

    let request: Value = serde_json::from_slice(&exchanges[0].request).unwrap();
    assert_eq!(request["body"]["registration_token"], json!(null));
}

#[test]
fn server_key_endpoint_is_stable() {
    let d = daemon(|_| {});
    let client = KeyAuthClient::new(&d.handle.url()).unwrap();
    let a = client.server_key_pem().unwrap();
    let b = client.server_key_pem().unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("-----BEGIN PUBLIC KEY-----"));
    assert_eq!(client.server_key().unwrap().fingerprint(), d.handle.service().server_fingerprint());
}

#[test]
fn token_mode_registration_over_http() {
    let d = daemon(|c| {
        c.registration_mode = RegistrationMode::Token;
        c.registration_token = Some("ops-issued".into());
    });
    let client = KeyAuthClient::new(&d.handle.url()).unwrap();
    let req = |token: Option<&str>| RegisterRequest {
        user_id: id("alice"),
        public_key_pem: user_key().public_key().to_pem(),
        registration_token: token.map(str::to_owned),
    };
    let err = client.register(req(Some("guess"))).unwrap_err();
    assert_eq!(err.code(), Some(ErrorCode::Unauthorized));
    assert!(client.register(req(Some("ops-issued"))).is_ok());
}

#[test]
fn challenge_issuance_is_rate_limited_per_address() {
    let clock = Arc::new(keyauth_server::ManualClock::new(1_700_000_040));
    let d = daemon_with_clock(|c| c.challenge_rate_limit = 3, clock.clone());
    let client = KeyAuthClient::new(&d.handle.url()).unwrap();
    register(&client, "alice");
    let req = || ChallengeRequest { user_id: id("alice"), service_id: id("mail") };
    let outcomes: Vec<_> = (0..3).map(|_| client.challenge(req())).collect();
    assert!(outcomes.iter().all(Result::is_ok));

    let t = HttpTransport::new(&d.handle.url()).unwrap();
    let raw = t.post(paths::CHALLENGE, keyauth_core::encode_message(&req().into())).unwrap();
    assert_eq!(raw.status, 429);
    match decode_message(&raw.body).unwrap() {
        Message::Error(e) => assert_eq!(e.code, ErrorCode::Unauthorized),
        other => panic!("{other:?}"),
    }

    clock.advance(60);
    assert!(client.challenge(req()).is_ok());
}

#[test]
fn pooled_and_fresh_connections_behave_the_same() {
    let d = daemon(|_| {});
    let fresh = KeyAuthClient::new(&d.handle.url()).unwrap();
    register(&fresh, "alice");

    // A transport that keeps one connection alive across requests.
    struct Pooled(reqwest::blocking::Client, String);
    impl Transport for Pooled {
        fn post(&self, path: &str, body: Vec<u8>) -> Result<keyauth_client::RawReply, ClientError> {
            let r = self.0.post(format!("{}{path}", self.1)).body(body).send().unwrap();
            Ok(keyauth_client::RawReply { status: r.status().as_u16(), body: r.bytes().unwrap().to_vec() })
        }
        fn get(&self, path: &str) -> Result<keyauth_client::RawReply, ClientError> {
            let r = self.0.get(format!("{}{path}", self.1)).send().unwrap();
            Ok(keyauth_client::RawReply { status: r.status().as_u16(), body: r.bytes().unwrap().to_vec() })
        }
    }
    let pooled = KeyAuthClient::with_transport(Pooled(reqwest::blocking::Client::new(), d.handle.url()));

    let before = d.handle.connections_accepted();
    for client in [&pooled as &dyn Flow, &fresh as &dyn Flow] {
        let (challenge, token_ok, replay) = client.run();
        assert!(challenge && token_ok);
        assert_eq!(replay, Some(ErrorCode::AlreadyConsumed));
    }
    // The pooled run used one connection; the fresh run used one per request.
    assert_eq!(d.handle.connections_accepted() - before, 1 + 4);
}

trait Flow {
    fn run(&self) -> (bool, bool, Option<ErrorCode>);
}

impl<T: Transport> Flow for KeyAuthClient<T> {
    fn run(&self) -> (bool, bool, Option<ErrorCode>) {
        let reply = self.challenge(ChallengeRequest { user_id: id("alice"), service_id: id("mail") });
        let Ok(reply) = reply else { return (false, false, None) };
        let sub = sign(&reply, "alice", "mail");
        let token = self.authenticate(sub.clone()).map(|r| r.token);
        let valid = token
            .map(|t| self.verify(VerifyRequest { token: t }).map(|v| v.valid).unwrap_or(false))
            .unwrap_or(false);
        let replay = self.authenticate(sub).err().and_then(|e| e.code());
        (true, valid, replay)
    }
}

#[test]
fn unreachable_daemon_is_a_network_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let client = KeyAuthClient::new(&url).unwrap();
    let err = client.server_key_pem().unwrap_err();
    assert!(matches!(err, ClientError::Network(_)));
}
