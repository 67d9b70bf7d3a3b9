#include <stdio.h>
#include "dlist.h"

void dlist_print(const struct dlist *l)
{
    printf("length %zu\n", l->length);
}

int main(void)
{
    struct dlist *l = dlist_create();
    dlist_push_back(l, 1);
    dlist_push_front(l, 0);
    dlist_print(l);
    dlist_destroy(l);
    return 0;
}
