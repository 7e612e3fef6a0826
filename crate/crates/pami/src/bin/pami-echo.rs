//! Test scorer: answers every request with the checksum scorer's scores.
//!
//! pami-echo [--classes N] [--jitter-ms MS] [--peak-file PATH]   serve on stdin/stdout
//! pami-echo --http ADDR [--classes N]                         serve POST /score

use std::sync::Arc;

use clap::Parser;
use pami::serve::{checksum_handler, serve_http, serve_stdio, StdioOptions};

#[derive(Parser)]
#[command(name = "pami-echo")]
struct Args {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Serve HTTP on this address instead of stdio; prints the bound address.
    #[arg(long)]
    http: Option<String>,
    #[arg(long, default_value_t = 0)]
    jitter_ms: u64,
    /// Write the peak number of concurrently open requests here on exit.
    #[arg(long)]
    peak_file: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
}

fn main() -> std::io::Result<()> {
    pami::init_logging();
    let args = Args::parse();
    if args.classes == 0 {
        eprintln!("--classes must be at least 1");
        std::process::exit(1);
    }
    let handler = checksum_handler(args.classes);
    match args.http {
        Some(addr) => {
            let server = Arc::new(tiny_http::Server::http(addr.as_str()).map_err(std::io::Error::other)?);
            println!("{}", server.server_addr());
            for h in serve_http(server, handler, args.workers) {
                let _ = h.join();
            }
        }
        None => {
            let stdin = std::io::stdin().lock();
            let peak = serve_stdio(stdin, std::io::stdout(), handler, StdioOptions { jitter_ms: args.jitter_ms })?;
            if let Some(p) = args.peak_file {
                std::fs::write(p, peak.to_string())?;
            }
        }
    }
    Ok(())
}
