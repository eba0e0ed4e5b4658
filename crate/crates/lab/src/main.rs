fn main() {
    std::process::exit(b92_lab::cli::run(std::env::args_os()));
}
