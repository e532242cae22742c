from factor_eval.main import cli

cli()
