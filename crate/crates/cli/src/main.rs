use clap::{CommandFactory, FromArgMatches};
use mindex_cli::{registry_help, run, Cli};

fn main() {
    let matches = Cli::command().after_help(registry_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            eprintln!("wrote {} files to {}", outcome.files.len() + 1, outcome.out_dir.display());
        }
        Err(e) => {
            eprintln!("mindex: error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
