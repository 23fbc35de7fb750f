fn main() {
    std::process::exit(richter::cli::run(std::env::args_os()));
}
