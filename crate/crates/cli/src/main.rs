use clap::Parser;
use sgp_cli::{execute, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("sgp_cli=info,sgp_core=warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(line) => println!("{line}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
