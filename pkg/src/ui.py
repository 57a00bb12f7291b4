from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from rich.align import Align
from rich.box import HEAVY, ROUNDED, SIMPLE
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text


def format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


class ReportUI:
    def __init__(self, console: Optional[Console] = None, quiet: bool = False):
        self.console = console or Console()
        self.quiet = quiet

    def show_header(self, command: str, instance: str = ""):
        """Banner naming the subcommand and the instance it runs on"""
        if self.quiet:
            return
        header = Text()
        header.append("◆ PLANEWAVE ", style="bold bright_cyan")
        header.append(command, style="bold bright_white")
        if instance:
            header.append(f"  ·  {instance}", style="bright_magenta")
        self.console.print(Align.left(header))

    def show_description(self, payload: Dict[str, Any]):
        table = Table.grid(padding=(0, 2))
        table.add_column(style="bright_yellow")
        table.add_column(style="bright_white")
        for key in ('name', 'p', 'dimension', 'signature', 'f', 'F', 'shape'):
            if key in payload:
                table.add_row(key, format_value(payload[key]))
        self.console.print(Panel(table, title="[bold bright_cyan]MANIFOLD[/bold bright_cyan]",
                                 border_style="bright_cyan", box=ROUNDED, padding=(1, 2)))

    def show_components(self, title: str, labels: Sequence[str], rows: Iterable[Tuple[Sequence[int], Any]],
                        limit: int = 40):
        """Non-zero tensor components with slot labels"""
        table = Table(box=SIMPLE, title=title, title_style="bold bright_magenta")
        table.add_column("index", style="bright_cyan")
        table.add_column("value", style="bright_white", justify="right")
        shown = 0
        total = 0
        for index, value in rows:
            total += 1
            if shown < limit:
                table.add_row("(" + ", ".join(labels[i] for i in index) + ")", format_value(value))
                shown += 1
        self.console.print(table)
        if total > shown:
            self.console.print(f"[dim]… {total - shown} more components in the JSON report[/dim]")

    def show_certificates(self, reports: List[Dict[str, Any]]):
        table = Table(box=ROUNDED, border_style="bright_blue")
        table.add_column("#", justify="right", style="dim")
        table.add_column("worst residual", justify="right")
        table.add_column("status")
        for i, report in enumerate(reports):
            worst = max(report['residuals'].values(), default=0.0)
            status = "[bright_green]✔ certified[/bright_green]" if report['passed'] else "[red]✘ failed[/red]"
            table.add_row(str(i), f"{worst:.3e}", status)
        self.console.print(table)

    def show_weyl(self, rows: List[Tuple[str, Any, bool]], limit: int = 30):
        table = Table(box=SIMPLE, title="scalar Weyl invariants", title_style="bold bright_magenta")
        table.add_column("scheme", style="bright_cyan")
        table.add_column("value", justify="right")
        table.add_column("", justify="center")
        for label, value, vanishes in rows[:limit]:
            table.add_row(label, format_value(value), "[bright_green]0[/bright_green]" if vanishes else "[red]≠0[/red]")
        self.console.print(table)
        if len(rows) > limit:
            self.console.print(f"[dim]… {len(rows) - limit} more schemes in the JSON report[/dim]")

    def show_mapping(self, title: str, payload: Dict[str, Any], style: str = "bright_cyan"):
        table = Table.grid(padding=(0, 2))
        table.add_column(style="bright_yellow")
        table.add_column(style="bright_white")
        for key, value in payload.items():
            if isinstance(value, (list, dict)):
                continue
            table.add_row(key, format_value(value))
        self.console.print(Panel(table, title=f"[bold {style}]{title}[/bold {style}]",
                                 border_style=style, box=ROUNDED, padding=(1, 2)))

    def show_suites(self, results: List[Dict[str, Any]]):
        table = Table(box=ROUNDED, border_style="bright_cyan", title="acceptance suites")
        table.add_column("suite", style="bright_white")
        table.add_column("checks", justify="right")
        table.add_column("failures", justify="right")
        table.add_column("status")
        for result in results:
            failures = len(result['failures'])
            status = "[bright_green]✔ pass[/bright_green]" if result['passed'] else "[red]✘ fail[/red]"
            table.add_row(result['suite'], str(result['checks']), str(failures), status)
        self.console.print(table)
        for result in results:
            for failure in result['failures'][:5]:
                self.console.print(f"[red]  {result['suite']}: {failure['label']}[/red] [dim]{failure['detail']}[/dim]")

    def show_reports_written(self, paths: Sequence[str]):
        for path in paths:
            self.console.print(f"[dim]report → {path}[/dim]")

    def show_error(self, message: str):
        error_panel = Panel(
            f"[bold red]ERROR:[/bold red] {message}",
            title="[bold red]⚠️  FAILED[/bold red]",
            border_style="red",
            box=HEAVY,
            padding=(1, 2)
        )
        self.console.print(error_panel)

    def show_success(self, message: str):
        self.console.print(Panel(f"[bold green]✨ {message}[/bold green]", border_style="bright_green", box=ROUNDED))

    def show_failure(self, message: str):
        self.console.print(Panel(f"[bold red]{message}[/bold red]", border_style="red", box=ROUNDED))
