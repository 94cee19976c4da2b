use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::time::{Duration, Instant};

use cpsflow::data::{Column, Dataset};
use cpsflow::learners::{fit_linear, LinearLearner, LinearModel, Model, NativeModel, OfflineLearner, TreeLearner};
use cpsflow::remote::{
    serve, ClientConfig, RemoteError, RemoteLearner, Request, Response, ServerConfig, Session,
};
use cpsflow::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn start<L>(learner: L) -> cpsflow::remote::ServerHandle
where
    L: OfflineLearner + Send + Sync + 'static,
    L::Model: Into<NativeModel>,
{
    serve(learner, "127.0.0.1:0", ServerConfig::default()).unwrap()
}

fn quick() -> ClientConfig {
    ClientConfig {
        timeout: Duration::from_secs(2),
        ..ClientConfig::default()
    }
}

fn xy(n: usize, p: usize, seed: u64) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect()).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| cols.iter().enumerate().map(|(j, c)| (j as f64 + 0.3) * c[i]).sum::<f64>() + rng.gen_range(-1.0..1.0))
        .collect();
    (
        Dataset::new(cols.into_iter().enumerate().map(|(j, c)| (format!("x{j}"), Column::from(c))).collect()).unwrap(),
        Dataset::new(vec![("y", Column::from(y))]).unwrap(),
    )
}

#[test]
fn linear_line_through_server() {
    let server = start(LinearLearner);
    let x = Dataset::new(vec![("x", Column::from(vec![0.0, 1.0, 2.0, 3.0]))]).unwrap();
    let y = Dataset::new(vec![("y", Column::from(vec![1.0, 3.0, 5.0, 7.0]))]).unwrap();
    let remote = RemoteLearner::connect(&server.address().to_string(), quick()).unwrap();
    let model = remote.learn(&x, &y).unwrap();
    let probe = Dataset::new(vec![("x", Column::from(vec![0.0, 10.0]))]).unwrap();
    let got = model.predict(&probe).unwrap().f64_column("y").unwrap();
    let oracle = fit_linear(&x, &y).unwrap().predict(&probe).unwrap().f64_column("y").unwrap();
    for ((g, o), want) in got.iter().zip(&oracle).zip([1.0, 21.0]) {
        assert!((g - want).abs() < 1e-8);
        assert_eq!(g.to_bits(), o.to_bits());
    }
    assert_eq!(model.input_names(), ["x".to_string()]);
    assert_eq!(model.output_name(), "y");
}

#[test]
fn remote_predictions_are_bit_identical() {
    let server = start(LinearLearner);
    let tree_server = start(TreeLearner::new(4, 1).unwrap());
    let remote = RemoteLearner::connect(&server.address().to_string(), quick()).unwrap();
    let remote_tree = RemoteLearner::connect(&tree_server.address().to_string(), quick()).unwrap();
    for seed in 0..20 {
        let (x, y) = xy(30 + seed as usize, 1 + seed as usize % 4, seed);
        let (probe, _) = xy(17, x.column_count(), seed + 1000);

        let local: LinearModel = LinearLearner.learn(&x, &y).unwrap();
        let model = remote.learn(&x, &y).unwrap();
        assert_eq!(model.predict(&probe).unwrap(), local.predict(&probe).unwrap());
        assert_eq!(model.fetch().unwrap(), NativeModel::Linear(local));

        let local = TreeLearner::new(4, 1).unwrap().learn(&x, &y).unwrap();
        let model = remote_tree.learn(&x, &y).unwrap();
        assert_eq!(model.predict(&probe).unwrap(), local.predict(&probe).unwrap());
    }
}

#[test]
fn requests_pair_with_responses_in_order() {
    let server = start(LinearLearner);
    let mut s = Session::connect(&server.address().to_string(), quick()).unwrap();
    let (x, y) = xy(20, 2, 1);
    let (a, _, _) = s.fit(&x, &y).unwrap();
    let (b, _, _) = s.fit(&x.slice_rows(0, 10), &y.slice_rows(0, 10)).unwrap();
    assert_ne!(a, b);
    for _ in 0..10 {
        assert_eq!(s.predict(&a, &x).unwrap().row_count(), 20);
        assert!(matches!(s.call(&Request::Save { model: b.clone() }).unwrap(), Response::Saved { .. }));
    }
    s.shutdown().unwrap();
}

#[test]
fn malformed_line_keeps_session_usable() {
    let server = start(LinearLearner);
    let mut s = Session::connect(&server.address().to_string(), quick()).unwrap();
    for junk in [&b"{not json"[..], b"[]", b"{\"kind\":\"dance\"}", b"{\"kind\":\"predict\"}"] {
        match s.send_raw(junk).unwrap() {
            Response::Error { message } => assert!(!message.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }
    let (x, y) = xy(10, 1, 3);
    let (id, _, _) = s.fit(&x, &y).unwrap();
    assert_eq!(s.predict(&id, &x).unwrap().row_count(), 10);
}

#[test]
fn errors_surface_as_typed_values() {
    let server = start(LinearLearner);
    let remote = RemoteLearner::connect(&server.address().to_string(), quick()).unwrap();
    let (x, y) = xy(10, 2, 4);
    let err = remote.learn(&x, &y.slice_rows(0, 5)).unwrap_err();
    assert!(matches!(err, Error::Remote(RemoteError::Remote(_))), "{err}");

    let model = remote.learn(&x, &y).unwrap();
    let wrong = x.select(&["x1", "x0"]).unwrap();
    assert!(matches!(
        model.predict(&wrong),
        Err(Error::Remote(RemoteError::SchemaMismatch { .. }))
    ));

    let mut s = Session::connect(&server.address().to_string(), quick()).unwrap();
    assert!(matches!(s.predict("m99", &x), Err(RemoteError::Remote(_))));
}

#[test]
fn sessions_are_isolated() {
    let server = start(LinearLearner);
    let mut a = Session::connect(&server.address().to_string(), quick()).unwrap();
    let mut b = Session::connect(&server.address().to_string(), quick()).unwrap();
    let (x, y) = xy(10, 1, 5);
    let (id, _, _) = a.fit(&x, &y).unwrap();
    assert!(a.predict(&id, &x).is_ok());
    assert!(matches!(b.predict(&id, &x), Err(RemoteError::Remote(_))));
}

#[test]
fn oversized_frames_fail_cleanly() {
    let config = ServerConfig {
        max_frame_bytes: 2048,
        ..ServerConfig::default()
    };
    let server = serve(LinearLearner, "127.0.0.1:0", config).unwrap();
    let mut s = Session::connect(&server.address().to_string(), quick()).unwrap();
    assert_eq!(s.max_frame_bytes(), 2048);
    let (x, y) = xy(500, 2, 6);
    assert!(matches!(s.fit(&x, &y), Err(RemoteError::FrameTooLarge { .. })));

    // bypass the client-side check: the server skips the frame and answers
    let mut big = b"{\"kind\":\"fit\",\"pad\":\"".to_vec();
    big.extend(std::iter::repeat(b'a').take(5000));
    big.extend(b"\"}\n");
    assert!(matches!(s.send_raw(&big).unwrap(), Response::Error { .. }));
    let (x, y) = xy(10, 1, 7);
    assert!(s.fit(&x, &y).is_ok());
}

struct SlowLearner(Duration);

impl OfflineLearner for SlowLearner {
    type Model = LinearModel;
    fn learn(&self, inputs: &Dataset, outputs: &Dataset) -> Result<LinearModel, Error> {
        std::thread::sleep(self.0);
        LinearLearner.learn(inputs, outputs)
    }
}

#[test]
fn server_killed_mid_fit() {
    let server = start(SlowLearner(Duration::from_millis(500)));
    let address = server.address().to_string();
    let started = Instant::now();
    let client = std::thread::spawn(move || {
        let mut s = Session::connect(&address, quick()).unwrap();
        let (x, y) = xy(10, 1, 8);
        s.fit(&x, &y)
    });
    std::thread::sleep(Duration::from_millis(100));
    server.shutdown();
    let err = client.join().unwrap().unwrap_err();
    assert!(
        matches!(err, RemoteError::ConnectionClosed | RemoteError::Timeout),
        "{err:?}"
    );
    assert!(started.elapsed() < Duration::from_secs(3));
}

#[test]
fn silent_server_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = listener.local_addr().unwrap().to_string();
    let hold = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        std::thread::sleep(Duration::from_millis(800));
        drop(stream);
    });
    let config = ClientConfig {
        timeout: Duration::from_millis(200),
        ..ClientConfig::default()
    };
    let started = Instant::now();
    assert_eq!(Session::connect(&address, config).unwrap_err(), RemoteError::Timeout);
    assert!(started.elapsed() < Duration::from_millis(700));
    hold.join().unwrap();
}

#[test]
fn version_mismatch_is_reported() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = listener.local_addr().unwrap().to_string();
    let fake = std::thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut line = String::new();
        BufReader::new(stream.try_clone().unwrap()).read_line(&mut line).unwrap();
        assert_eq!(line, "{\"kind\":\"hello\",\"version\":1}\n");
        stream
            .write_all(b"{\"kind\":\"hello_ack\",\"version\":2,\"max_frame_bytes\":100}\n")
            .unwrap();
    });
    assert_eq!(
        Session::connect(&address, quick()).unwrap_err(),
        RemoteError::VersionMismatch { server: 2, client: 1 }
    );
    fake.join().unwrap();
}

#[test]
fn server_rejects_other_versions_and_unknown_order() {
    let server = start(LinearLearner);
    let stream = std::net::TcpStream::connect(server.address()).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut w = stream;
    let mut ask = |line: &str| {
        w.write_all(line.as_bytes()).unwrap();
        let mut out = String::new();
        reader.read_line(&mut out).unwrap();
        serde_json::from_str::<Response>(&out).unwrap()
    };
    assert!(matches!(ask("{\"kind\":\"save\",\"model\":\"m1\"}\n"), Response::Error { .. }));
    assert!(matches!(ask("{\"kind\":\"hello\",\"version\":7}\n"), Response::Error { .. }));
    assert!(matches!(ask("{\"kind\":\"hello\",\"version\":1}\n"), Response::HelloAck { version: 1, .. }));
    assert_eq!(ask("{\"kind\":\"shutdown\"}\n"), Response::ShutdownAck);
}

#[test]
fn max_sessions_enforced() {
    let config = ServerConfig {
        max_sessions: 1,
        ..ServerConfig::default()
    };
    let server = serve(LinearLearner, "127.0.0.1:0", config).unwrap();
    let _first = Session::connect(&server.address().to_string(), quick()).unwrap();
    assert!(matches!(
        Session::connect(&server.address().to_string(), quick()),
        Err(RemoteError::Remote(_))
    ));
}

#[test]
fn connect_failure_and_bind_failure() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = listener.local_addr().unwrap().to_string();
    drop(listener);
    assert!(matches!(
        Session::connect(&address, quick()),
        Err(RemoteError::ConnectFailed { .. })
    ));

    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = taken.local_addr().unwrap().to_string();
    assert!(matches!(
        serve(LinearLearner, &address, ServerConfig::default()),
        Err(RemoteError::BindFailed { .. })
    ));
}
