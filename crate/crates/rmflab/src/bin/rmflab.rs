fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(rmflab::cli::run(&argv));
}
