fn main() {
    std::process::exit(ctxmat::pipeline::cli::run(std::env::args_os()));
}
