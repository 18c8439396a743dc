use std::io::Write;

fn main() {
    let (code, out, err) = natrob_cli::main_with_args(std::env::args_os());
    print!("{out}");
    if !err.is_empty() {
        let _ = writeln!(std::io::stderr(), "{err}");
    }
    let _ = std::io::stdout().flush();
    std::process::exit(code);
}
