use clap::Parser;

use qfactor_cli::{emit, run, Cli};

fn main() {
    let cli = Cli::parse();
    let report = run(&cli.command);
    let code = emit(&report, cli.command.format());
    std::process::exit(code);
}
