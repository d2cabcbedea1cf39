use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;

use music_intent_llm::{ChatClient, EndpointConfig, HttpChatClient, RequestError};

struct Captured {
    head: String,
    body: serde_json::Value,
}

fn read_request(stream: &mut TcpStream) -> Captured {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut head = String::new();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            length = v.trim().parse().unwrap();
        }
        if line == "\r\n" || line.is_empty() {
            break;
        }
        head.push_str(&line);
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    Captured {
        head,
        body: serde_json::from_slice(&body).unwrap(),
    }
}

/// Serves one request with `status` and `body`, reporting what it received.
fn serve_once(status: u16, body: &'static str) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let captured = read_request(&mut stream);
        let response = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream.write_all(response.as_bytes()).unwrap();
        tx.send(captured).unwrap();
    });
    (url, rx)
}

fn config(url: String) -> EndpointConfig {
    EndpointConfig {
        base_url: url,
        model: "test-model".into(),
        timeout_secs: 5.0,
        ..EndpointConfig::default()
    }
}

#[test]
fn posts_chat_request_and_reads_first_choice() {
    let (url, rx) = serve_once(
        200,
        r#"{"choices":[{"message":{"role":"assistant","content":"'greeting']"}},{"message":{"content":"x"}}]}"#,
    );
    let client = HttpChatClient::with_key(&config(url), Some("sk-test".into())).unwrap();
    assert_eq!(client.complete("hello").unwrap(), "'greeting']");
    let req = rx.recv().unwrap();
    assert!(req.head.starts_with("POST /v1/chat/completions "));
    assert!(req
        .head
        .to_ascii_lowercase()
        .contains("authorization: bearer sk-test"));
    assert_eq!(req.body["model"], "test-model");
    assert_eq!(req.body["messages"][0]["role"], "user");
    assert_eq!(req.body["messages"][0]["content"], "hello");
    assert_eq!(req.body["temperature"], 0.0);
    assert_eq!(req.body["max_tokens"], 64);
}

#[test]
fn maps_failure_statuses() {
    let (url, _rx) = serve_once(401, r#"{"error":"bad key"}"#);
    let client = HttpChatClient::with_key(&config(url), None).unwrap();
    assert!(matches!(client.complete("q"), Err(RequestError::Auth(401))));

    let (url, _rx) = serve_once(500, r#"{"error":"boom"}"#);
    let client = HttpChatClient::with_key(&config(url), None).unwrap();
    match client.complete("q") {
        Err(e @ RequestError::Http { status: 500, .. }) => assert!(e.is_retryable()),
        other => panic!("{other:?}"),
    }

    let (url, _rx) = serve_once(200, r#"{"choices":[]}"#);
    let client = HttpChatClient::with_key(&config(url), None).unwrap();
    assert!(matches!(
        client.complete("q"),
        Err(RequestError::BadResponse(_))
    ));
}

#[test]
fn closed_port_is_unreachable() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let client =
        HttpChatClient::with_key(&config(format!("http://127.0.0.1:{port}/v1")), None).unwrap();
    assert!(matches!(
        client.complete("q"),
        Err(RequestError::Unreachable(_))
    ));
}

#[test]
fn credential_comes_from_the_named_variable() {
    let mut c = config("http://127.0.0.1:1/v1".into());
    c.api_key_env = Some("MUSIC_INTENT_TEST_KEY_THAT_IS_NOT_SET".into());
    let err = HttpChatClient::from_config(&c).unwrap_err().to_string();
    assert!(err.contains("MUSIC_INTENT_TEST_KEY_THAT_IS_NOT_SET"));
}
