use clap::Parser;

fn main() {
    let cli = microclimate::cli::Cli::parse();
    if let Err(e) = microclimate::cli::run(cli) {
        // One machine-parseable line: the stable error class, then the story.
        let message = e.to_string().replace('\n', " ");
        eprintln!("error class={} {}", e.class(), message);
        std::process::exit(1);
    }
}
