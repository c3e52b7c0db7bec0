fn main() {
    let code = attiqa_cli::dispatch(std::env::args());
    std::process::exit(code);
}
