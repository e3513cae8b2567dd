use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};

use motionfield::server::StaticServer;

fn request(addr: SocketAddr, raw: &str) -> (u16, String, Vec<u8>) {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.write_all(raw.as_bytes()).unwrap();
    let mut buf = Vec::new();
    stream.read_to_end(&mut buf).unwrap();
    let split = buf.windows(4).position(|w| w == b"\r\n\r\n").expect("header end");
    let head = String::from_utf8(buf[..split].to_vec()).unwrap();
    let status = head.split(' ').nth(1).unwrap().parse().unwrap();
    (status, head, buf[split + 4..].to_vec())
}

fn get(addr: SocketAddr, method: &str, path: &str) -> (u16, String, Vec<u8>) {
    request(addr, &format!("{method} {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\nContent-Length: 0\r\n\r\n"))
}

#[test]
fn serves_files_read_only_with_content_types() {
    let export = tempfile::tempdir().unwrap();
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(export.path().join("manifest.json"), b"{\"ok\":1}").unwrap();
    std::fs::write(export.path().join("times.bin"), [1u8, 2, 3]).unwrap();
    std::fs::write(assets.path().join("index.html"), b"<html></html>").unwrap();
    std::fs::write(assets.path().join("app.js"), b"1").unwrap();
    let outside = tempfile::tempdir().unwrap();
    std::fs::write(outside.path().join("secret.txt"), b"s").unwrap();

    let server = StaticServer::bind("127.0.0.1", 0, vec![export.path().into(), assets.path().into()]).unwrap();
    let addr = server.local_addr();
    let handle = server.spawn(2);

    let (status, head, body) = get(addr, "GET", "/manifest.json");
    assert_eq!((status, body.as_slice()), (200, b"{\"ok\":1}".as_slice()));
    assert!(head.to_ascii_lowercase().contains("content-type: application/json"), "{head}");
    let (status, head, body) = get(addr, "GET", "/times.bin");
    assert_eq!((status, body), (200, vec![1, 2, 3]));
    assert!(head.to_ascii_lowercase().contains("content-type: application/octet-stream"));
    let (status, head, _) = get(addr, "GET", "/");
    assert_eq!(status, 200);
    assert!(head.to_ascii_lowercase().contains("content-type: text/html"));
    assert!(get(addr, "GET", "/app.js").1.to_ascii_lowercase().contains("content-type: text/javascript"));

    let (status, _, body) = get(addr, "HEAD", "/manifest.json");
    assert_eq!((status, body.len()), (200, 0));
    for method in ["POST", "PUT", "DELETE", "PATCH"] {
        let (status, head, _) = get(addr, method, "/manifest.json");
        assert_eq!(status, 405, "{method}");
        assert!(head.contains("Allow: GET, HEAD"));
    }
    assert_eq!(std::fs::read(export.path().join("manifest.json")).unwrap(), b"{\"ok\":1}");

    let escape = format!("/../{}/secret.txt", outside.path().file_name().unwrap().to_str().unwrap());
    for path in ["/missing.bin", escape.as_str(), "/%2e%2e/secret.txt"] {
        assert_eq!(get(addr, "GET", path).0, 404, "{path}");
    }
    #[cfg(unix)]
    {
        std::os::unix::fs::symlink(outside.path().join("secret.txt"), export.path().join("link.txt")).unwrap();
        assert_eq!(get(addr, "GET", "/link.txt").0, 404);
    }
    handle.shutdown();
}

#[test]
fn concurrent_reads_all_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let payload: Vec<u8> = (0..200_000u32).map(|i| (i % 251) as u8).collect();
    std::fs::write(dir.path().join("reference.bin"), &payload).unwrap();
    let server = StaticServer::bind("127.0.0.1", 0, vec![dir.path().into()]).unwrap();
    let addr = server.local_addr();
    let handle = server.spawn(4);
    let clients: Vec<_> = (0..8).map(|_| std::thread::spawn(move || get(addr, "GET", "/reference.bin"))).collect();
    for c in clients {
        let (status, _, body) = c.join().unwrap();
        assert_eq!(status, 200);
        assert!(body == payload);
    }
    handle.shutdown();
}

#[test]
fn port_in_use_and_missing_roots_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let first = StaticServer::bind("127.0.0.1", 0, vec![dir.path().into()]).unwrap();
    let port = first.local_addr().port();
    assert!(StaticServer::bind("127.0.0.1", port, vec![dir.path().into()]).is_err());
    assert!(StaticServer::bind("127.0.0.1", 0, vec![dir.path().join("nope")]).is_err());
}
