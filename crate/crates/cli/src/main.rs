use clap::Parser;

fn main() {
    // Die quietly when a downstream pipe closes instead of panicking on
    // the next print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = vqann_cli::Cli::parse();
    if let Err(err) = vqann_cli::run(&cli) {
        eprintln!("{err}");
        std::process::exit(err.exit_code());
    }
}
