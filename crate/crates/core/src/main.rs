fn main() {
    std::process::exit(ba_forms::cli::run(std::env::args_os()));
}
