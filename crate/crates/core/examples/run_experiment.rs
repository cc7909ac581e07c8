//! Runs a subcommand from an inline configuration into a temporary run
//! directory and lists the artifacts.
use homcascade::cli::config::Config;
use homcascade::cli::run_with;

fn main() -> homcascade::Result<()> {
    let cfg = Config::from_toml("beta = 1.25\nlambda = 2\ndepth = 2\n[drift]\npoints = 11\n")?;
    let out = std::env::temp_dir().join("homcascade-example");
    for cmd in ["schedule", "drift"] {
        let m = run_with(cmd, &cfg, &out.join(cmd))?;
        println!("{cmd}: status {}, schedule digest {}", m.status, m.schedule_digest.as_deref().unwrap_or("-"));
        for a in &m.artifacts {
            println!("  {:<28} {:>7} bytes  {}", a.path, a.bytes, &a.sha256[..16]);
        }
    }
    let summary = std::fs::read_to_string(out.join("drift").join("summary.txt"))?;
    println!("{summary}");
    Ok(())
}
