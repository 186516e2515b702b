import logging
import html as html_lib
from typing import Dict, Any, List, Tuple

logger = logging.getLogger(__name__)


def _fmt(value, digits: int = 6) -> str:
    if value is None:
        return "N/A"
    try:
        return f"{float(value):.{digits}g}"
    except (TypeError, ValueError):
        return str(value)


def _rows(results: Dict[str, Any]) -> List[Tuple[str, str]]:
    rows = []
    run = results.get("run", {})
    if run:
        rows.append(("Termination", str(run.get("termination"))))
        rows.append(("Outer iterations", str(run.get("outer_iters"))))
        rows.append(("Final lp residual", _fmt(run.get("final_lp_residual"))))
        rows.append(("Final eps", _fmt(run.get("final_eps"))))
    bcc = results.get("bcc")
    if bcc is not None:
        rows.append(("alpha_hat", _fmt(bcc.alpha_hat)))
        rows.append(("beta_hat", _fmt(bcc.beta_hat)))
        rows.append(("BCC samples", str(bcc.num_samples)))
    if "strong_convexity" in results:
        rows.append(("Strong convexity estimate", _fmt(results["strong_convexity"])))
    if "uscc1_constant" in results:
        rows.append(("USCC-1 constant (min ratio)", _fmt(results["uscc1_constant"])))
        rows.append(("USCC-1 steps checked", str(len(results.get("uscc1_ratios", [])))))
    if "lipcond" in results:
        rows.append(("Lipcond estimate", _fmt(results["lipcond"])))
    decay = results.get("decay")
    if decay is not None:
        rows.append(("Empirical mu", "no decay" if decay.no_decay else _fmt(decay.mu_empirical)))
        rows.append(("Error plateau", _fmt(decay.residual_plateau)))
    if "critical_point_residual" in results:
        rows.append(("||grad f_eps(final_x)||", _fmt(results["critical_point_residual"])))
    constants = results.get("mu_nu")
    if constants is not None:
        rows.append(("mu", _fmt(constants.mu)))
        rows.append(("nu", _fmt(constants.nu)))
        rows.append(("Contraction (mu < 1)", "yes" if constants.contraction else "no"))
    return rows


class ReportGenerator:
    """
    Renders diagnostics results as plain text or HTML.
    """
    @staticmethod
    def format_text_report(results: Dict[str, Any]) -> str:
        lines = [f"{label}: {value}" for label, value in _rows(results)]
        for w in results.get("warnings", []):
            lines.append(f"warning: {w}")
        return "\n".join(lines)

    @staticmethod
    def generate_html_report(results: Dict[str, Any], filepath: str, title: str) -> bool:
        """
        Generates an HTML report and saves it to the specified filepath.
        """
        title = html_lib.escape(title)
        try:
            html = f"""
            <!DOCTYPE html>
            <html>
            <head>
                <title>Diagnostics: {title}</title>
                <style>
                    body {{ font-family: sans-serif; margin: 20px; }}
                    h1, h2, h3 {{ color: #333; }}
                    .section {{ margin-bottom: 20px; padding: 15px; border: 1px solid #ddd; border-radius: 5px; }}
                    .warning {{ color: #d9534f; font-weight: bold; }}
                    table {{ border-collapse: collapse; width: 100%; }}
                    th, td {{ border: 1px solid #ddd; padding: 8px; text-align: left; }}
                    th {{ background-color: #f2f2f2; }}
                </style>
            </head>
            <body>
                <h1>Diagnostics Report</h1>
                <h2>{title}</h2>

                <div class="section">
                    <table>
                        <tr><th>Quantity</th><th>Value</th></tr>
            """
            for label, value in _rows(results):
                html += f"<tr><td>{html_lib.escape(label)}</td><td>{html_lib.escape(value)}</td></tr>"
            html += """
                    </table>
                </div>
            """

            ratios = results.get("uscc1_ratios")
            if ratios:
                html += """
                <div class="section">
                    <h3>Per-step descent ratios</h3>
                    <table>
                        <tr><th>Step</th><th>Ratio</th></tr>
                """
                for step, ratio in enumerate(ratios):
                    html += f"<tr><td>{step}</td><td>{_fmt(ratio)}</td></tr>"
                html += """
                    </table>
                </div>
                """

            if results.get('warnings'):
                html += """
                <div class="section">
                    <h3>Warnings</h3>
                    <ul>
                """
                for w in results['warnings']:
                    html += f"<li class='warning'>{html_lib.escape(str(w))}</li>"
                html += """
                    </ul>
                </div>
                """

            html += """
            </body>
            </html>
            """

            with open(filepath, 'w') as f:
                f.write(html)

            return True
        except Exception as e:
            logger.error(f"Failed to generate report: {e}")
            return False
