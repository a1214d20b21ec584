fn main() {
    std::process::exit(reobench::cli::run(std::env::args_os()));
}
