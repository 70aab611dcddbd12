fn main() {
    let code = l2h::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
