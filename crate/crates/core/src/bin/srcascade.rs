fn main() {
    let code = srcascade::cli::dispatch(std::env::args_os());
    std::process::exit(code);
}
