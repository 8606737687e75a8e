// Single-page client for the oversight server. The server is the sole
// source of truth: every screen renders straight from an API response, and
// visibility toggles only repaint after the server acknowledges them.

import { ApiClient, ApiError } from "./api.js";
import type { AppRow, CatalogApp, Me, Member, Post } from "./api.js";
import {
  authorName,
  escapeHtml,
  installedBadge,
  likeLabel,
  memberInitials,
  shortTime,
  tallyRowView,
} from "./views.js";

export interface AppOptions {
  server?: string;
  pollMs?: number; // notification badge poll period; 0 disables
}

type Tab = "discovery" | "installed" | "people" | "feed";

const TAB_TELEMETRY: Record<Tab, string> = {
  discovery: "open_community_apps",
  installed: "open_own_apps",
  people: "open_community_members",
  feed: "open_community_feed",
};

export class App {
  api: ApiClient | null = null;
  me: Me | null = null;
  communityId = "";
  members: Member[] = [];
  tab: Tab = "discovery";
  private subview: { kind: "explore" | "messages"; member: Member } | null = null;
  private dialogPkg = "";
  private dialogFilter: "all" | "granted" | "denied" = "all";
  // Navigation generation: a render only writes the panel if no newer
  // navigation started while its fetches were in flight, so a slow earlier
  // screen can never overwrite the one the user switched to.
  private nav = 0;
  private lastEventId = 0;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;
  private readonly server: string;
  private readonly pollMs: number;

  constructor(private root: HTMLElement, options: AppOptions = {}) {
    this.server = options.server ?? "";
    this.pollMs = options.pollMs ?? 8000;
  }

  mount(): void {
    const saved = typeof sessionStorage !== "undefined" ? sessionStorage.getItem("token") : null;
    this.renderLogin();
    if (saved) {
      void this.login(saved).catch(() => this.renderLogin());
    }
  }

  destroy(): void {
    if (this.pollTimer !== null) clearTimeout(this.pollTimer);
    this.pollTimer = null;
  }

  // -- login -----------------------------------------------------------------

  private renderLogin(message = ""): void {
    this.destroy();
    this.root.innerHTML = `
      <div class="login-panel" data-testid="login">
        <h1>permcircle</h1>
        <p>Paste the bearer token issued to your device.</p>
        <input id="token-input" data-testid="token-input" type="password"
               placeholder="session token" autocomplete="off">
        <button id="login-btn" data-testid="login-btn">Sign in</button>
        <p class="flash" data-testid="login-error">${escapeHtml(message)}</p>
      </div>`;
    const input = this.root.querySelector<HTMLInputElement>("#token-input")!;
    this.root.querySelector("#login-btn")!.addEventListener("click", () => {
      void this.login(input.value.trim()).catch((err) =>
        this.renderLogin(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err)),
      );
    });
  }

  async login(token: string): Promise<void> {
    const api = new ApiClient(this.server, token);
    const me = await api.me();
    this.api = api;
    this.me = me;
    if (typeof sessionStorage !== "undefined") sessionStorage.setItem("token", token);
    this.communityId = me.communities[0]?.community_id ?? "";
    this.renderShell();
    if (this.communityId) {
      const nav = this.nav;
      await this.loadMembers();
      // Auto-open discovery only if the user hasn't clicked a tab already.
      if (nav === this.nav) await this.showTab("discovery");
    } else {
      this.panel().innerHTML = `<p class="empty">You are not in a community yet. Join one from a device agent.</p>`;
    }
    if (this.pollMs > 0) this.scheduleNotificationPoll();
  }

  logout(): void {
    if (typeof sessionStorage !== "undefined") sessionStorage.removeItem("token");
    this.api = null;
    this.me = null;
    this.renderLogin();
  }

  // -- frame -----------------------------------------------------------------

  private panel(): HTMLElement {
    return this.root.querySelector<HTMLElement>("#panel")!;
  }

  private renderShell(): void {
    const me = this.me!;
    const options = me.communities
      .map(
        (c) =>
          `<option value="${escapeHtml(c.community_id)}"${
            c.community_id === this.communityId ? " selected" : ""
          }>${escapeHtml(c.name)}</option>`,
      )
      .join("");
    this.root.innerHTML = `
      <div class="shell">
        <header>
          <span class="brand">permcircle</span>
          <select id="community-select" data-testid="community-select">${options}</select>
          <span class="spacer"></span>
          <button id="bell" data-testid="bell" title="notifications">
            &#128276;<span id="badge" data-testid="badge" class="badge"></span>
          </button>
          <span class="whoami">${escapeHtml(me.display_name)}</span>
          <button id="logout" data-testid="logout">Sign out</button>
        </header>
        <nav class="tabs">
          <button data-tab="discovery" data-testid="tab-discovery">Discovery</button>
          <button data-tab="installed" data-testid="tab-installed">Installed</button>
          <button data-tab="people" data-testid="tab-people">People</button>
          <button data-tab="feed" data-testid="tab-feed">Feed</button>
        </nav>
        <p class="flash" id="flash" data-testid="flash"></p>
        <main id="panel"></main>
        <div id="dialog" class="dialog-backdrop hidden" data-testid="dialog"></div>
      </div>`;
    this.root.querySelectorAll<HTMLButtonElement>("[data-tab]").forEach((btn) => {
      btn.addEventListener("click", () => void this.showTab(btn.dataset.tab as Tab));
    });
    this.root.querySelector("#logout")!.addEventListener("click", () => this.logout());
    this.root
      .querySelector<HTMLSelectElement>("#community-select")!
      .addEventListener("change", (ev) => {
        this.communityId = (ev.target as HTMLSelectElement).value;
        void this.loadMembers().then(() => this.showTab(this.tab));
      });
    this.root.querySelector("#bell")!.addEventListener("click", () => void this.readNotifications());
  }

  private flash(message: string): void {
    const el = this.root.querySelector<HTMLElement>("#flash");
    if (el) el.textContent = message;
  }

  private async loadMembers(): Promise<void> {
    const { members } = await this.api!.members(this.communityId);
    this.members = members;
  }

  async showTab(tab: Tab): Promise<void> {
    this.nav++;
    this.tab = tab;
    this.subview = null;
    this.flash("");
    this.root.querySelectorAll<HTMLButtonElement>("[data-tab]").forEach((b) => {
      b.classList.toggle("active", b.dataset.tab === tab);
    });
    this.api!.recordUsage(TAB_TELEMETRY[tab]);
    if (tab === "discovery") await this.renderDiscovery();
    else if (tab === "installed") await this.renderInstalled();
    else if (tab === "people") await this.renderPeople();
    else await this.renderFeed();
  }

  // -- screens -----------------------------------------------------------------

  private appRowHtml(row: AppRow): string {
    const badge = installedBadge(row.viewer_installed);
    return `
      <li class="app-row" data-testid="app-row-${escapeHtml(row.package)}">
        <div class="app-main">
          <span class="app-label">${escapeHtml(row.label)}</span>
          <span class="app-package">${escapeHtml(row.package)}</span>
        </div>
        ${badge ? `<span class="installed-badge">${badge}</span>` : ""}
        <span class="count" title="installed by">${row.installer_count}</span>
        <button class="menu-btn" data-menu="${escapeHtml(row.package)}"
                data-testid="menu-${escapeHtml(row.package)}">&#9776;</button>
      </li>`;
  }

  private wireMenuButtons(scope: HTMLElement): void {
    scope.querySelectorAll<HTMLButtonElement>("[data-menu]").forEach((btn) => {
      btn.addEventListener("click", () => void this.openPermissions(btn.dataset.menu!));
    });
  }

  private async renderDiscovery(): Promise<void> {
    const nav = this.nav;
    const { apps } = await this.api!.communityApps(this.communityId);
    if (nav !== this.nav) return;
    this.panel().innerHTML = `
      <h2>All apps in this community</h2>
      <ul class="app-list" data-testid="discovery-list">
        ${apps.map((r) => this.appRowHtml(r)).join("") || `<p class="empty">No visible apps yet.</p>`}
      </ul>`;
    this.wireMenuButtons(this.panel());
  }

  private async renderInstalled(): Promise<void> {
    const nav = this.nav;
    const me = this.me!;
    const [mine, community] = await Promise.all([
      this.api!.memberApps(this.communityId, me.member_id),
      this.api!.communityApps(this.communityId),
    ]);
    if (nav !== this.nav) return;
    const counts = new Map(community.apps.map((r) => [r.package, r.installer_count]));
    const rows = mine.apps
      .map((app) => {
        const hidden = app.visibility === "hidden";
        return `
        <li class="app-row" data-testid="own-row-${escapeHtml(app.package)}">
          <div class="app-main">
            <span class="app-label">${escapeHtml(app.label)}</span>
            <span class="app-package">${escapeHtml(app.package)}</span>
          </div>
          <label class="switch" title="visibility">
            <input type="checkbox" data-toggle="${escapeHtml(app.package)}"
                   data-testid="visibility-toggle-${escapeHtml(app.package)}"
                   ${hidden ? "" : "checked"}>
            <span data-testid="visibility-state-${escapeHtml(app.package)}">
              ${hidden ? "Hidden" : "Visible"}
            </span>
          </label>
          <span class="count">${counts.get(app.package) ?? 1}</span>
          <button class="menu-btn" data-menu="${escapeHtml(app.package)}"
                  data-testid="menu-${escapeHtml(app.package)}">&#9776;</button>
        </li>`;
      })
      .join("");
    this.panel().innerHTML = `
      <h2>Apps on your device</h2>
      <ul class="app-list" data-testid="installed-list">
        ${rows || `<p class="empty">Nothing synced from your device yet.</p>`}
      </ul>`;
    this.wireMenuButtons(this.panel());
    this.panel()
      .querySelectorAll<HTMLInputElement>("[data-toggle]")
      .forEach((input) => {
        input.addEventListener("change", () => {
          void this.toggleVisibility(input.dataset.toggle!, input.checked ? "visible" : "hidden");
        });
      });
  }

  async toggleVisibility(pkg: string, visibility: "visible" | "hidden"): Promise<void> {
    // No optimistic flip: the switch settles only after the server answers.
    try {
      await this.api!.setVisibility(pkg, visibility);
      this.api!.recordUsage("toggle_visibility");
    } catch (err) {
      this.flash(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
    }
    if (this.tab === "installed" && !this.subview) {
      await this.renderInstalled();
    }
  }

  private async renderPeople(): Promise<void> {
    const nav = this.nav;
    await this.loadMembers();
    if (nav !== this.nav) return;
    const rows = this.members
      .map(
        (m) => `
      <li class="member-row" data-testid="member-row-${escapeHtml(m.member_id)}">
        <span class="avatar">${escapeHtml(memberInitials(m.display_name))}</span>
        <span class="member-name">${escapeHtml(m.display_name)}</span>
        <button data-messages="${escapeHtml(m.member_id)}"
                data-testid="messages-${escapeHtml(m.member_id)}">messages</button>
        <button data-explore="${escapeHtml(m.member_id)}"
                data-testid="explore-${escapeHtml(m.member_id)}">explore</button>
      </li>`,
      )
      .join("");
    this.panel().innerHTML = `
      <h2>Community members</h2>
      <ul class="member-list" data-testid="people-list">${rows}</ul>`;
    this.panel()
      .querySelectorAll<HTMLButtonElement>("[data-explore]")
      .forEach((btn) =>
        btn.addEventListener("click", () => void this.openExplore(btn.dataset.explore!)),
      );
    this.panel()
      .querySelectorAll<HTMLButtonElement>("[data-messages]")
      .forEach((btn) =>
        btn.addEventListener("click", () => void this.openMessages(btn.dataset.messages!)),
      );
  }

  async openExplore(memberId: string): Promise<void> {
    const member = this.members.find((m) => m.member_id === memberId);
    if (!member) return;
    const nav = ++this.nav;
    this.subview = { kind: "explore", member };
    this.api!.recordUsage("open_member_apps");
    const { apps } = await this.api!.memberApps(this.communityId, memberId);
    if (nav !== this.nav) return;
    const rows = apps
      .map(
        (app: CatalogApp) => `
      <li class="app-row" data-testid="explore-row-${escapeHtml(app.package)}">
        <div class="app-main">
          <span class="app-label">${escapeHtml(app.label)}</span>
          <span class="app-package">${escapeHtml(app.package)}</span>
        </div>
        <button class="menu-btn" data-menu="${escapeHtml(app.package)}"
                data-testid="menu-${escapeHtml(app.package)}">&#9776;</button>
      </li>`,
      )
      .join("");
    this.panel().innerHTML = `
      <button class="back" data-testid="back">&larr; People</button>
      <h2>Apps installed by ${escapeHtml(member.display_name)}</h2>
      <ul class="app-list" data-testid="explore-list">
        ${rows || `<p class="empty">No visible apps.</p>`}
      </ul>`;
    this.panel().querySelector(".back")!.addEventListener("click", () => void this.showTab("people"));
    this.wireMenuButtons(this.panel());
  }

  async openMessages(memberId: string): Promise<void> {
    const member = this.members.find((m) => m.member_id === memberId);
    if (!member) return;
    const nav = ++this.nav;
    this.subview = { kind: "messages", member };
    const { messages } = await this.api!.messages(memberId);
    if (nav !== this.nav) return;
    const mine = this.me!.member_id;
    const rows = messages
      .map(
        (m) => `
      <li class="message ${m.sender === mine ? "outgoing" : "incoming"}">
        <span class="message-body">${escapeHtml(m.body)}</span>
        <span class="message-time">${shortTime(m.created_at)}</span>
      </li>`,
      )
      .join("");
    this.panel().innerHTML = `
      <button class="back" data-testid="back">&larr; People</button>
      <h2>Messages with ${escapeHtml(member.display_name)}</h2>
      <ul class="message-list" data-testid="message-list">${rows}</ul>
      <div class="composer">
        <input id="message-input" data-testid="message-input" placeholder="Say something helpful">
        <button id="message-send" data-testid="message-send">Send</button>
      </div>`;
    this.panel().querySelector(".back")!.addEventListener("click", () => void this.showTab("people"));
    this.panel().querySelector("#message-send")!.addEventListener("click", () => {
      const input = this.panel().querySelector<HTMLInputElement>("#message-input")!;
      void this.sendMessage(memberId, input.value);
    });
  }

  async sendMessage(memberId: string, body: string): Promise<void> {
    try {
      await this.api!.sendMessage(memberId, body);
      this.api!.recordUsage("send_message");
      if (this.subview?.kind === "messages" && this.subview.member.member_id === memberId) {
        await this.openMessages(memberId);
      }
    } catch (err) {
      this.flash(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
    }
  }

  private postHtml(post: Post): string {
    const replies = post.replies
      .map(
        (r) => `
      <li class="reply">
        <span class="reply-author">${escapeHtml(authorName(r.author, this.members))}</span>
        <span class="reply-body">${escapeHtml(r.body)}</span>
      </li>`,
      )
      .join("");
    return `
      <li class="post" data-testid="post-${post.post_id}">
        <div class="post-head">
          <span class="post-author">${escapeHtml(authorName(post.author, this.members))}</span>
          ${post.is_pro_tip ? `<span class="pro-tip-badge" data-testid="pro-tip-badge">Pro tip</span>` : ""}
          <span class="post-time">${shortTime(post.created_at)}</span>
        </div>
        <p class="post-body">${escapeHtml(post.body)}</p>
        <button class="like-btn" data-like="${post.post_id}"
                data-testid="like-${post.post_id}">${likeLabel(post)}</button>
        <ul class="replies">${replies}</ul>
        <div class="composer">
          <input data-reply-input="${post.post_id}" data-testid="reply-input-${post.post_id}"
                 placeholder="Reply">
          <button data-reply="${post.post_id}" data-testid="reply-${post.post_id}">Reply</button>
        </div>
      </li>`;
  }

  private async renderFeed(): Promise<void> {
    const nav = this.nav;
    const { posts } = await this.api!.feed(this.communityId);
    if (nav !== this.nav) return;
    this.panel().innerHTML = `
      <h2>Community feed</h2>
      <div class="composer">
        <input id="post-input" data-testid="post-input" placeholder="Start a discussion">
        <button id="post-send" data-testid="post-send">Post</button>
      </div>
      <ul class="feed" data-testid="feed-list">
        ${posts.map((p) => this.postHtml(p)).join("") || `<p class="empty">Nothing here yet.</p>`}
      </ul>`;
    this.panel().querySelector("#post-send")!.addEventListener("click", () => {
      const input = this.panel().querySelector<HTMLInputElement>("#post-input")!;
      void this.submitPost(input.value);
    });
    this.panel()
      .querySelectorAll<HTMLButtonElement>("[data-like]")
      .forEach((btn) =>
        btn.addEventListener("click", () => void this.likePost(Number(btn.dataset.like))),
      );
    this.panel()
      .querySelectorAll<HTMLButtonElement>("[data-reply]")
      .forEach((btn) =>
        btn.addEventListener("click", () => {
          const input = this.panel().querySelector<HTMLInputElement>(
            `[data-reply-input="${btn.dataset.reply}"]`,
          )!;
          void this.submitReply(Number(btn.dataset.reply), input.value);
        }),
      );
  }

  private async refreshFeed(): Promise<void> {
    if (this.tab === "feed" && !this.subview) await this.renderFeed();
  }

  async submitPost(body: string): Promise<void> {
    try {
      await this.api!.createPost(this.communityId, body);
      this.api!.recordUsage("create_post");
      await this.refreshFeed();
    } catch (err) {
      this.flash(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
    }
  }

  async likePost(postId: number): Promise<void> {
    await this.api!.toggleLike(postId);
    this.api!.recordUsage("like_post");
    await this.refreshFeed();
  }

  async submitReply(postId: number, body: string): Promise<void> {
    try {
      await this.api!.reply(postId, body);
      this.api!.recordUsage("reply_post");
      await this.refreshFeed();
    } catch (err) {
      this.flash(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
    }
  }

  // -- permissions dialog --------------------------------------------------------

  async openPermissions(pkg: string, filter: "all" | "granted" | "denied" = "all"): Promise<void> {
    this.dialogPkg = pkg;
    this.dialogFilter = filter;
    this.api!.recordUsage("open_app_permissions");
    const { permissions } = await this.api!.permissionTally(this.communityId, pkg, filter);
    const rows = permissions
      .map((row) => {
        const view = tallyRowView(row);
        return `
        <li class="tally-row" data-testid="tally-row-${escapeHtml(view.permission)}">
          <div class="tally-name">${escapeHtml(view.permission)}</div>
          <div class="tally-desc">${escapeHtml(view.description)}</div>
          <div class="tally-counts">
            ${view.showGranted ? `<span class="granted" data-testid="granted-${escapeHtml(view.permission)}">${escapeHtml(view.grantedLabel)}</span>` : ""}
            ${view.showDenied ? `<span class="denied" data-testid="denied-${escapeHtml(view.permission)}">${escapeHtml(view.deniedLabel)}</span>` : ""}
          </div>
        </li>`;
      })
      .join("");
    const dialog = this.root.querySelector<HTMLElement>("#dialog")!;
    dialog.classList.remove("hidden");
    dialog.innerHTML = `
      <div class="dialog">
        <h3>Permissions of ${escapeHtml(pkg)}</h3>
        <div class="filters">
          <button data-filter="all" data-testid="filter-all"
                  class="${filter === "all" ? "active" : ""}">All</button>
          <button data-filter="granted" data-testid="filter-granted"
                  class="${filter === "granted" ? "active" : ""}">Granted</button>
          <button data-filter="denied" data-testid="filter-denied"
                  class="${filter === "denied" ? "active" : ""}">Denied</button>
        </div>
        <ul class="tally-list" data-testid="tally-list">
          ${rows || `<p class="empty">No permissions match this filter.</p>`}
        </ul>
        <button id="dialog-close" data-testid="dialog-close">Close</button>
      </div>`;
    dialog.querySelectorAll<HTMLButtonElement>("[data-filter]").forEach((btn) =>
      btn.addEventListener("click", () =>
        void this.openPermissions(this.dialogPkg, btn.dataset.filter as "all" | "granted" | "denied"),
      ),
    );
    dialog.querySelector("#dialog-close")!.addEventListener("click", () => {
      dialog.classList.add("hidden");
      dialog.innerHTML = "";
    });
  }

  // -- notifications ---------------------------------------------------------------

  private scheduleNotificationPoll(): void {
    this.pollTimer = setTimeout(() => {
      void this.pollBadge().finally(() => {
        if (this.api) this.scheduleNotificationPoll();
      });
    }, this.pollMs);
  }

  async pollBadge(): Promise<void> {
    if (!this.api) return;
    const { events } = await this.api.notifications(0, 0);
    this.lastEventId = events.length ? events[events.length - 1].event_id : this.lastEventId;
    const badge = this.root.querySelector<HTMLElement>("#badge");
    if (badge) badge.textContent = events.length ? String(events.length) : "";
  }

  async readNotifications(): Promise<void> {
    if (!this.api) return;
    await this.pollBadge();
    if (this.lastEventId > 0) {
      await this.api.ack(this.lastEventId);
    }
    const badge = this.root.querySelector<HTMLElement>("#badge");
    if (badge) badge.textContent = "";
    await this.showTab(this.tab);
  }
}

export function mountApp(root: HTMLElement, options: AppOptions = {}): App {
  const app = new App(root, options);
  app.mount();
  return app;
}
