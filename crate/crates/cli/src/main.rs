use clap::Parser;
use groundkit_cli::args::Cli;
use groundkit_cli::commands;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GROUNDKIT_LOG", "warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
