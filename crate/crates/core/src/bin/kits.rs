use clap::Parser;
use kits::cli::{run, Cli};
use kits::KitsError;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli).map_err(anyhow::Error::from) {
        Ok(summary) => println!("{summary}"),
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<KitsError>().map_or(1, KitsError::exit_code);
            std::process::exit(code);
        }
    }
}
